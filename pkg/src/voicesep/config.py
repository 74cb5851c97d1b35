"""Run configuration: every tunable in one flat record, two named profiles,
and a plain-text key=value serialization used by the CLI, checkpoints, and
reports."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .model import InferenceConfig
from .signal import StftConfig

VARIANTS = ("nri", "ris-s", "ris-l")

# recurrent-inference settings implied by each named variant
_VARIANT_RI = {"ris-s": (3, 1e-2), "ris-l": (10, 1e-3)}

SAMPLE_RATE = 44100


@dataclass
class RunConfig:
    # analysis
    win_len: int = 2049
    fft_len: int = 4096
    hop: int = 384
    window: str = "hamming"
    # model dimensions
    low_bands: int = 744
    seq_len: int = 60
    context: int = 10
    # inference variant
    variant: str = "ris-l"
    ri_max_iter: int = 10
    ri_tau_term: float = 1e-3
    # loss
    tau_rec: float = 1.5
    tau_min: float = 0.25
    lambda_mask: float = 1e-2
    lambda_dec: float = 1e-4
    kl_epsilon: float = 1e-12
    # optimization
    learning_rate: float = 1e-4
    batch_size: int = 16
    epochs: int = 100
    clip_norm: float = 0.5
    seed: int = 1234
    # evaluation
    eval_filter_len: int = 512

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.low_bands > self.n_bins:
            raise ValueError(f"low_bands={self.low_bands} exceeds n_bins={self.n_bins}")
        if self.seq_len <= 2 * self.context:
            raise ValueError(f"need seq_len > 2*context, got T={self.seq_len}, "
                             f"L={self.context}")
        if not (0 < self.hop <= self.win_len <= self.fft_len):
            raise ValueError("need 0 < hop <= win_len <= fft_len")
        for name in ("learning_rate", "batch_size", "epochs", "clip_norm",
                     "eval_filter_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def n_bins(self) -> int:
        return self.fft_len // 2 + 1

    def stft_config(self) -> StftConfig:
        return StftConfig(win_len=self.win_len, fft_len=self.fft_len,
                          hop=self.hop, window=self.window)

    def inference_config(self) -> InferenceConfig:
        return InferenceConfig(
            use_recurrent_inference=self.variant != "nri",
            max_iter=self.ri_max_iter, tau_term=self.ri_tau_term)

    def apply_variant(self, variant: str) -> None:
        """Set the model variant, pinning its recurrent-inference settings."""
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        self.variant = variant
        if variant in _VARIANT_RI:
            self.ri_max_iter, self.ri_tau_term = _VARIANT_RI[variant]

    def to_mapping(self) -> dict[str, str]:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            out[f.name] = repr(value) if isinstance(value, float) else str(value)
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_mapping().items())

    @classmethod
    def from_mapping(cls, mapping: dict[str, str], base: "RunConfig | None" = None) -> "RunConfig":
        """Build a config from string key/values, on top of ``base`` defaults."""
        cfg = dataclasses.replace(base) if base is not None else cls()
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for key, raw in mapping.items():
            if key not in types:
                raise KeyError(f"unknown config key {key!r}")
            current = getattr(cfg, key)
            if isinstance(current, bool):
                value = raw.strip().lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                value = int(raw)
            elif isinstance(current, float):
                value = float(raw)
            else:
                value = raw.strip()
            setattr(cfg, key, value)
        cfg.validate()
        return cfg

    @classmethod
    def from_text(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        return cls.from_mapping(parse_key_values(text), base=base)


def parse_key_values(text: str) -> dict[str, str]:
    """Parse a plain-text ``key = value`` document; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def paper_profile() -> RunConfig:
    """The published configuration: 44.1 kHz, 2049/4096/384 STFT, F=744,
    T=60, L=10, Adam 1e-4, batch 16, clip 0.5, 100 epochs."""
    return RunConfig()


def desk_profile() -> RunConfig:
    """Reduced dimensions for fast CPU tests; same band fraction (~8 kHz)."""
    cfg = RunConfig(win_len=512, fft_len=1024, hop=256, low_bands=186,
                    seq_len=30, context=5)
    return cfg


PROFILES = {"paper": paper_profile, "desk": desk_profile}
