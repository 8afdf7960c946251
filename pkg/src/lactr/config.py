"""Line-oriented ``key=value`` run configuration.

One flat namespace covers model hyperparameters, pipeline thresholds, fold
settings, synthetic-data settings, and file paths.  Unknown keys are
rejected with their line number; ``parse(serialize(cfg)) == cfg`` holds for
every configuration.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import InputError
from .model import Hyperparams
from .synth import SynthConfig


@dataclass(frozen=True)
class RunConfig:
    # model hyperparameters
    k: int = 200
    lambda_u: float = 0.01
    lambda_v: float = 100.0
    lambda_s: float = 0.01
    lambda_phi: float = 1.0
    a_r: float = 1.0
    b_r: float = 0.01
    a_phi: float = 1.0
    b_phi: float = 0.01
    theta_mode: str = "optimize"
    max_sweeps: int = 100
    tol: float = 1e-6
    theta_steps: int = 5
    # corpus preparation
    top_m: int = 3000
    min_votes: int = 10
    min_words: int = 10
    # social structure
    neg_samples: int = 5
    attribution: str = "all"
    # topic warm start
    lda_alpha: float = 1.0
    lda_eta: float = 0.01
    lda_iters: int = 100
    # evaluation
    n_folds: int = 5
    eval_mode: str = "in_matrix"
    x_grid: str = "20:200:20"
    aggregation: str = "max"
    models: str = "lactr,ctr"
    latents: str = "interest,attention"
    # synthetic data
    n_users: int = 50
    n_items: int = 100
    vocab_size: int = 200
    doc_length: int = 60
    graph: str = "erdos_renyi:0.1"
    adoption: str = "threshold:0.5"
    target_rate: float = 0.0
    theta_alpha: float = 1.0
    beta_eta: float = 0.1
    # misc
    seed: int = 0
    threads: int = 0
    # paths (usually supplied by CLI flags; empty = unset)
    items_file: str = ""
    votes_file: str = ""
    edges_file: str = ""
    data_dir: str = ""
    init_file: str = ""
    model_file: str = ""
    out_dir: str = ""

    @classmethod
    def parse(cls, text: str, source: str = "<config>") -> "RunConfig":
        values: dict[str, object] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InputError(
                    f"{source}:{lineno}: expected 'key=value', got {line!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _SCHEMA:
                raise InputError(
                    f"{source}:{lineno}: unknown config key {key!r}")
            if key in values:
                raise InputError(
                    f"{source}:{lineno}: duplicate config key {key!r}")
            typ = _SCHEMA[key]
            try:
                values[key] = typ(val) if typ is not str else val
            except ValueError:
                raise InputError(
                    f"{source}:{lineno}: cannot parse {key}={val!r} as "
                    f"{typ.__name__}") from None
        return cls(**values)

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return cls.parse(fh.read(), source=path)
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc

    def serialize(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            lines.append(f"{f.name}={val!r}" if isinstance(val, float)
                         else f"{f.name}={val}")
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(
            k=self.k, lambda_u=self.lambda_u, lambda_v=self.lambda_v,
            lambda_s=self.lambda_s, lambda_phi=self.lambda_phi,
            a_r=self.a_r, b_r=self.b_r, a_phi=self.a_phi, b_phi=self.b_phi,
            theta_mode=self.theta_mode, max_sweeps=self.max_sweeps,
            tol=self.tol)

    def x_grid_values(self) -> list[int]:
        """Parse the grid: either ``start:stop:step`` (inclusive) or a
        comma-separated list."""
        spec = self.x_grid.strip()
        try:
            if ":" in spec:
                start_s, stop_s, step_s = spec.split(":")
                start, stop, step = int(start_s), int(stop_s), int(step_s)
                if step < 1 or start < 1 or stop < start:
                    raise ValueError
                return list(range(start, stop + 1, step))
            xs = [int(tok) for tok in spec.split(",") if tok.strip()]
        except ValueError:
            raise InputError(f"malformed x grid {self.x_grid!r}") from None
        if not xs or xs[0] < 1 or any(b <= a for a, b in zip(xs, xs[1:])):
            raise InputError(f"malformed x grid {self.x_grid!r}")
        return xs

    def _parse_rule(self, raw: str, what: str) -> tuple[str, float]:
        kind, sep, param = raw.partition(":")
        if not sep:
            raise InputError(f"malformed {what} {raw!r} (expected name:param)")
        try:
            return kind, float(param)
        except ValueError:
            raise InputError(f"malformed {what} parameter {param!r}") \
                from None

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            n_users=self.n_users, n_items=self.n_items, k=self.k,
            vocab_size=self.vocab_size, doc_length=self.doc_length,
            graph=self._parse_rule(self.graph, "graph model"),
            hp=self.hyperparams(),
            adoption=self._parse_rule(self.adoption, "adoption rule"),
            seed=self.seed, theta_alpha=self.theta_alpha,
            beta_eta=self.beta_eta,
            target_rate=self.target_rate if self.target_rate > 0 else None)

    def model_names(self) -> list[str]:
        names = [tok.strip() for tok in self.models.split(",") if tok.strip()]
        if not names:
            raise InputError("no models selected")
        return names

    def latent_names(self) -> tuple[str, ...]:
        names = tuple(tok.strip() for tok in self.latents.split(",")
                      if tok.strip())
        if not names:
            raise InputError("no latents selected")
        return names


_SCHEMA: dict[str, type] = {
    f.name: f.type if isinstance(f.type, type) else {"int": int,
                                                     "float": float,
                                                     "str": str}[f.type]
    for f in dataclasses.fields(RunConfig)
}
