"""Command line entry point: ``slitfb run|validate|exponents``.

Exit codes: 0 success, 1 configuration or validation error, 2 numerical
failure (a ``diagnostics.json`` is written next to the other artifacts).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from .elliptic import Bellman, BellmanFamily, EllipticityPair, Pucci, algebra_violations
from .grid import Grid, GridFunction
from .solver import ObstacleSpec, SignoriniProblem, solve_signorini, zero_obstacle

EXPERIMENTS = ("solve", "exponents", "blowup", "fb", "harnack", "barriers")
OPERATORS = ("pucci+", "pucci-", "bellman")
OBSTACLES = ("zero", "quadratic", "table")
BOUNDARIES = ("explicit-laplacian", "linear", "table", "homogeneous-trace")
RNG_NAME = "numpy.random.Philox"


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details or {}


def _tool_version() -> str:
    try:
        return version("slitfb")
    except PackageNotFoundError:
        return "unknown"


@dataclass
class Tolerances:
    solve: float = 1e-8
    contact: float = 1e-7
    shooting: float = 1e-10


@dataclass
class Domain:
    dim: int = 2
    radius: float = 1.0
    h: float = 1 / 32
    symmetric: bool = True
    shape: str = "box"


@dataclass
class ExperimentConfig:
    experiment: str
    ellipticity: tuple = (1.0, 1.0)
    operator: dict = field(default_factory=lambda: {"kind": "pucci+"})
    domain: Domain = field(default_factory=Domain)
    obstacle: dict = field(default_factory=lambda: {"kind": "zero"})
    boundary: dict = field(default_factory=lambda: {"kind": "explicit-laplacian"})
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int = 0
    output_dir: str = "slitfb-out"
    params: dict = field(default_factory=dict)
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    @classmethod
    def from_dict(cls, raw: dict, base_dir=".") -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        known = {"experiment", "ellipticity", "operator", "domain", "obstacle", "boundary",
                 "tolerances", "seed", "output_dir", "params"}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "experiment" not in raw:
            raise ConfigError("missing key 'experiment'")
        ell = raw.get("ellipticity", {"lambda": 1.0, "Lambda": 1.0})
        if isinstance(ell, dict):
            try:
                ell = (ell["lambda"], ell["Lambda"])
            except KeyError as exc:
                raise ConfigError(f"ellipticity needs 'lambda' and 'Lambda': missing {exc}") from None
        op = raw.get("operator", {"kind": "pucci+"})
        if isinstance(op, str):
            op = {"kind": op}
        try:
            domain = Domain(**raw.get("domain", {}))
            tols = Tolerances(**raw.get("tolerances", {}))
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg = cls(
            experiment=raw["experiment"],
            ellipticity=tuple(float(x) for x in ell),
            operator=op,
            domain=domain,
            obstacle=raw.get("obstacle", {"kind": "zero"}),
            boundary=raw.get("boundary", {"kind": "explicit-laplacian"}),
            tolerances=tols,
            seed=raw.get("seed", 0),
            output_dir=raw.get("output_dir", "slitfb-out"),
            params=raw.get("params", {}),
            base_dir=Path(base_dir),
        )
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        return cls.from_dict(raw, path.parent)

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
        lam, Lam = self.ellipticity
        if not 0 < lam <= Lam:
            raise ConfigError(f"need 0 < lambda <= Lambda, got {lam}, {Lam}")
        if self.operator.get("kind") not in OPERATORS:
            raise ConfigError(f"operator kind must be one of {OPERATORS}")
        if self.operator["kind"] == "bellman" and "file" not in self.operator:
            raise ConfigError("bellman operator needs a 'file'")
        d = self.domain
        if d.dim not in (2, 3):
            raise ConfigError("domain.dim must be 2 or 3")
        if d.shape not in ("box", "ball"):
            raise ConfigError("domain.shape must be 'box' or 'ball'")
        if not (d.h > 0 and d.radius > 0):
            raise ConfigError("domain.h and domain.radius must be positive")
        m = d.radius / d.h
        if abs(m - round(m)) > 1e-9 * max(1.0, m):
            raise ConfigError(f"h={d.h} does not divide radius {d.radius}")
        if self.obstacle.get("kind") not in OBSTACLES:
            raise ConfigError(f"obstacle kind must be one of {OBSTACLES}")
        if self.boundary.get("kind") not in BOUNDARIES:
            raise ConfigError(f"boundary kind must be one of {BOUNDARIES}")
        for kind, section in (("table", self.obstacle), ("table", self.boundary)):
            if section["kind"] == kind and "file" not in section:
                raise ConfigError("table data needs a 'file'")
        if self.boundary["kind"] == "linear":
            vec = self.boundary.get("vector")
            if vec is None or len(vec) != d.dim:
                raise ConfigError("linear boundary needs a vector of length dim")
        if self.boundary["kind"] == "homogeneous-trace" and not 0 < self.boundary.get("beta", -1) < 3:
            raise ConfigError("homogeneous-trace boundary needs beta in (0, 3)")
        if self.boundary["kind"] == "explicit-laplacian" and d.dim != 2:
            raise ConfigError("explicit-laplacian boundary data are two dimensional")
        if self.experiment in ("solve", "blowup", "fb") and not d.symmetric:
            raise ConfigError("thin obstacle experiments need a domain symmetric in x_n")
        for name, t in asdict(self.tolerances).items():
            if not t > 0:
                raise ConfigError(f"tolerance {name} must be positive")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        if not isinstance(self.params, dict):
            raise ConfigError("params must be an object")

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d["ellipticity"] = {"lambda": self.ellipticity[0], "Lambda": self.ellipticity[1]}
        return d

    @property
    def ell(self) -> EllipticityPair:
        return EllipticityPair(*self.ellipticity)

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed))

    def grid(self) -> Grid:
        d = self.domain
        ext = (d.radius,) * d.dim
        return Grid(d.dim, d.h, ext, d.symmetric, d.shape == "ball")

    def _path(self, name) -> Path:
        p = Path(name)
        return p if p.is_absolute() else self.base_dir / p

    def operator_obj(self):
        kind = self.operator["kind"]
        if kind == "bellman":
            members = json.loads(self._path(self.operator["file"]).read_text())
            if isinstance(members, dict):
                members = members["members"]
            return Bellman(BellmanFamily(np.asarray(members, dtype=float), self.ell))
        return Pucci(self.ell, "plus" if kind == "pucci+" else "minus")

    def obstacle_obj(self, grid: Grid) -> ObstacleSpec:
        ob = self.obstacle
        if ob["kind"] == "zero":
            return zero_obstacle()
        if ob["kind"] == "quadratic":
            c = ob.get("coeffs", {})
            k = grid.dim - 1
            c0 = float(c.get("constant", 0.0))
            b = np.asarray(c.get("linear", [0.0] * k), dtype=float)
            A = np.asarray(c.get("hessian", np.zeros((k, k))), dtype=float).reshape(k, k)
            A = 0.5 * (A + A.T)
            bound = float(np.abs(np.linalg.eigvalsh(A)).max())
            return ObstacleSpec(lambda xp: c0 + xp @ b + 0.5 * np.einsum("ni,ij,nj->n", xp, A, xp), bound)
        table = GridFunction.from_csv(self._path(ob["file"]), grid)
        thin = np.flatnonzero(grid.thin)
        lut = {tuple(np.rint(grid.index[i, :-1]).tolist()): table.values[i] for i in thin}

        def phi(xp):
            keys = np.rint(np.asarray(xp) / grid.h).astype(np.int64)
            return np.array([lut[tuple(k)] for k in keys.tolist()])

        return ObstacleSpec(phi)

    def boundary_fn(self, grid: Grid):
        bd = self.boundary
        if bd["kind"] == "explicit-laplacian":
            return explicit_laplacian
        if bd["kind"] == "linear":
            v = np.asarray(bd["vector"], dtype=float)
            return lambda P: P @ v
        if bd["kind"] == "homogeneous-trace":
            beta = float(bd["beta"])
            return lambda P: np.linalg.norm(P, axis=1) ** beta
        table = GridFunction.from_csv(self._path(bd["file"]), grid)
        return table.values


def explicit_laplacian(P) -> np.ndarray:
    """Re((x_1 + i|x_n|)^{3/2}): the harmonic thin obstacle solution with contact set {x_1 <= 0}."""
    z = P[:, 0] + 1j * np.abs(P[:, -1])
    return np.real(z ** 1.5)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def emit_manifest(cfg: ExperimentConfig, outputs, out_dir: Path, status: str = "ok") -> Path:
    """Manifest with the config echo, tool version, RNG and artifact hashes."""
    artifacts = [
        {"path": p.name, "sha256": _sha256(p), "bytes": p.stat().st_size}
        for p in sorted(outputs, key=lambda q: q.name)
    ]
    manifest = {
        "tool": {"name": "slitfb", "version": _tool_version()},
        "config": cfg.echo(),
        "rng": {"generator": RNG_NAME, "seed": cfg.seed},
        "status": status,
        "artifacts": artifacts,
    }
    return _write_json(out_dir / "manifest.json", manifest)


def _solve(cfg: ExperimentConfig, out: Path, outputs: list):
    grid = cfg.grid()
    p = SignoriniProblem(grid, cfg.operator_obj(), cfg.boundary_fn(grid), cfg.obstacle_obj(grid))
    rep = solve_signorini(p, tol=cfg.tolerances.solve, contact_tol=cfg.tolerances.contact)
    outputs.append(rep.solution.to_csv(out / "solution.csv"))
    rep.to_json(out / "solve_report.json")
    outputs.append(out / "solve_report.json")
    if rep.failed:
        raise NumericalFailure(rep.message, rep.to_dict())
    return rep


def _fb_origin(rep):
    from .analysis import free_boundary_nodes

    grid = rep.solution.grid
    fb = free_boundary_nodes(grid, rep.contact_nodes)
    if fb.size == 0:
        return None
    return int(fb[np.argmin(np.linalg.norm(grid.points[fb], axis=1))])


def _blowup(cfg, rep, out, outputs, dump_fields=False):
    from .analysis import classify_point

    node = _fb_origin(rep)
    if node is None:
        outputs.append(_write_json(out / "blowup_report.json", {"classification": "no free boundary"}))
        return None
    eps = float(cfg.params.get("eps", 0.1))
    nu = float(cfg.params.get("nu_threshold", 2.0))
    b = classify_point(
        rep.solution, rep.obstacle, node, eps=eps, nu_threshold=nu, contact=rep.contact_nodes
    )
    b.to_json(out / "blowup_report.json")
    outputs.append(out / "blowup_report.json")
    if dump_fields:
        for k in range(len(b.rescaled)):
            path = out / f"rescaled_{k:02d}.csv"
            b.rescaled_to_csv(k, path)
            outputs.append(path)
    return b


def _run_solve(cfg, out, outputs):
    rep = _solve(cfg, out, outputs)
    _blowup(cfg, rep, out, outputs)


def _run_blowup(cfg, out, outputs):
    rep = _solve(cfg, out, outputs)
    _blowup(cfg, rep, out, outputs, dump_fields=True)


def _run_fb(cfg, out, outputs):
    from .analysis import directional_monotonicity, extract_free_boundary, nondegeneracy_fit

    rep = _solve(cfg, out, outputs)
    try:
        fb = extract_free_boundary(rep)
    except ValueError as exc:
        raise NumericalFailure(str(exc)) from None
    ell_cone = float(cfg.params.get("cone_lipschitz", 0.5))
    mono, node, tau = directional_monotonicity(rep.solution, fb.e, ell_cone, slit=rep.contact_nodes)
    x0 = fb.nodes[np.argmin(np.linalg.norm(fb.points, axis=1))]
    nd = nondegeneracy_fit(rep.solution, rep.obstacle, int(x0), fb.e, ell=cfg.ell)
    report = fb.to_dict()
    report["monotonicity"] = {"cone_lipschitz": ell_cone, "min": mono, "node": node, "tau": tau}
    report["nondegeneracy"] = nd.to_dict()
    outputs.append(_write_json(out / "fb_report.json", report))


def _run_exponents(cfg, out, outputs):
    from .exponents import BetaSearchError, ExponentPair, ShootingError, write_exponent_table

    try:
        pair = ExponentPair.compute(cfg.ell, cfg.tolerances.shooting)
        row = pair.as_row()
    except (BetaSearchError, ShootingError) as exc:
        raise NumericalFailure(str(exc)) from None
    outputs.append(write_exponent_table([pair], out / "exponents.csv"))
    outputs.append(_write_json(out / "exponents.json", row))


def harnack_experiment(ell: EllipticityPair, h=1 / 64, eps=0.2, tol=1e-7, radius=1.0):
    """Two slit solves vanishing on {x_1 <= 0}, data increasing in x_1, and their ratio report."""
    from .analysis import ConeSpec, harnack_ratio

    grid = Grid.half_ball(2, radius, h)
    traces = (lambda P: (1 + P[:, 0]) / 2, lambda P: ((1 + P[:, 0]) / 2) ** 3)
    sols, reports = [], []
    for g in traces:
        p = SignoriniProblem(grid, Pucci(ell, "plus"), g, mode="slit", slit=lambda xp: xp[:, 0] <= 0)
        rep = solve_signorini(p, tol=tol)
        reports.append(rep)
        sols.append(rep.solution)
    cone = ConeSpec((0.0,), (1.0,), eps, ((-1.0,),), strict=eps < 0.125)
    thetas = ((1.0,), (1.0,))
    return harnack_ratio(sols[0], sols[1], cone, thetas=thetas, solver_tol=tol), sols, reports, cone


def _run_harnack(cfg, out, outputs):
    eps = float(cfg.params.get("eps", 0.2))
    rep, sols, reports, _ = harnack_experiment(cfg.ell, cfg.domain.h, eps, cfg.tolerances.solve, cfg.domain.radius)
    if any(r.failed for r in reports):
        raise NumericalFailure("slit solve did not converge", [r.to_dict() for r in reports])
    for k, s in enumerate(sols, 1):
        outputs.append(s.to_csv(out / f"u{k}.csv"))
    rep.to_json(out / "harnack_report.json")
    outputs.append(out / "harnack_report.json")
    if not rep.ok:
        raise NumericalFailure("ratio not finite and positive", rep.to_dict())


def _run_barriers(cfg, out, outputs):
    from .barriers import hopf_certificate, hopf_min_N, phi0_certificate, series_certificate, series_weights

    ell, dim = cfg.ell, cfg.domain.dim
    checks = {}
    for d in (2, 3):
        checks[f"dim{d}"] = algebra_violations(cfg.rng(), ell, d, int(cfg.params.get("n_matrices", 10_000)))
    outputs.append(_write_json(out / "operator_checks.json", {"seed": cfg.seed, "rng": RNG_NAME, **checks}))
    certs = {
        "phi0": phi0_certificate(ell, dim, h=cfg.domain.h, seed=cfg.seed).to_dict(),
        "series": series_certificate(2.0 ** -np.arange(10), ell, dim, seed=cfg.seed).to_dict(),
        "hopf": hopf_certificate(1.01 * hopf_min_N(ell, 0.5, dim), 0.5, ell, dim, seed=cfg.seed).to_dict(),
    }
    w = series_weights(2.0 ** -np.arange(40))
    certs["series_weights"] = {"sum_b": float(w.b.sum()), "bound": w.bound, "bound_holds": bool(w.bound_holds)}
    outputs.append(_write_json(out / "certificates.json", certs))
    failed = [k for k in ("phi0", "series", "hopf") if not certs[k]["passed"]]
    if failed:
        raise NumericalFailure(f"certificates failed: {failed}")


RUNNERS = {
    "solve": _run_solve,
    "blowup": _run_blowup,
    "fb": _run_fb,
    "exponents": _run_exponents,
    "harnack": _run_harnack,
    "barriers": _run_barriers,
}


def run(cfg: ExperimentConfig, out_dir=None) -> int:
    out = Path(out_dir) if out_dir is not None else cfg._path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs: list = []
    status, code = "ok", 0
    try:
        RUNNERS[cfg.experiment](cfg, out, outputs)
    except NumericalFailure as exc:
        outputs.append(_write_json(out / "diagnostics.json", {"error": str(exc), "details": exc.details}))
        status, code = "numerical_failure", 2
    emit_manifest(cfg, outputs, out, status)
    return code


def _cmd_run(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    code = run(cfg, args.output)
    print(f"{cfg.experiment}: {'ok' if code == 0 else 'numerical failure'}")
    return code


def _cmd_validate(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
        cfg.operator_obj()
    except (ConfigError, ValueError, OSError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(cfg.echo(), indent=2, sort_keys=True))
    return 0


def _cmd_exponents(args) -> int:
    from .exponents import BetaSearchError, ExponentPair, ShootingError, TABLE_COLUMNS

    try:
        ell = EllipticityPair(args.lam, args.Lam)
    except ValueError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    try:
        row = ExponentPair.compute(ell, args.tol).as_row()
    except (BetaSearchError, ShootingError) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 2
    print(",".join(TABLE_COLUMNS))
    print(",".join(repr(float(row[c])) for c in TABLE_COLUMNS))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slitfb", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("config")
    r.add_argument("--output", "-o", default=None, help="override output_dir")
    r.set_defaults(fn=_cmd_run)
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    v.set_defaults(fn=_cmd_validate)
    e = sub.add_parser("exponents", help="print beta1, beta2 for one ellipticity pair")
    e.add_argument("--lambda", dest="lam", type=float, required=True)
    e.add_argument("--Lambda", dest="Lam", type=float, required=True)
    e.add_argument("--tol", type=float, default=1e-10)
    e.set_defaults(fn=_cmd_exponents)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
