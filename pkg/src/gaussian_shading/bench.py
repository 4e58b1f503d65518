"""Seeded experiment runner for detection statistics.

Every trial draws its randomness from ``SeedSequence([seed, trial_id])`` so a
trial's outcome depends only on the config and its id, never on execution
order. Pipeline losses of a real model are emulated with channels from
:mod:`gaussian_shading.diffusion`.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .cipher import KeyMaterial, keygen
from .codec import WatermarkMessage, message_from_text
from .detector import extract_bits, hamming, p_value, reference_ciphertext, threshold_for_tfpr
from .diffusion import (MODES, POLICIES, ChannelSpec, LinearDenoiser, ZeroDenoiser,
                        apply_channel, build_schedule, ddim_inverse, ddim_sample)
from .exceptions import ChannelError, ConfigError
from .sampler import UniformSource, reverse_sample, sample_latent

KEY_POLICIES = ("fixed", "per_sample_nonce", "per_sample_key")
COHORTS = ("watermarked", "clean")


@dataclass(frozen=True)
class DiffusionConfig:
    policy: str = "linear"
    schedule_steps: int = 1000
    num_steps: int = 500
    denoiser: str = "linear"
    data_std: float = 0.5
    mode: str = "standard"

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ConfigError(f"must be one of {POLICIES}", "diffusion.policy")
        if self.denoiser not in ("zero", "linear"):
            raise ConfigError("must be 'zero' or 'linear'", "diffusion.denoiser")
        if self.mode not in MODES:
            raise ConfigError(f"must be one of {MODES}", "diffusion.mode")
        if not 1 <= self.num_steps <= self.schedule_steps:
            raise ConfigError("must lie in [1, schedule_steps]", "diffusion.num_steps")
        if not self.data_std > 0:
            raise ConfigError("must be positive", "diffusion.data_std")

    def build(self):
        schedule = build_schedule(self.policy, self.schedule_steps)
        if self.denoiser == "zero":
            return schedule, ZeroDenoiser()
        return schedule, LinearDenoiser.gaussian_optimal(schedule, self.data_std)


@dataclass(frozen=True)
class BenchConfig:
    """One cohort of trials.

    With ``message=None`` each trial draws a random message whose length is
    uniform over ``random_message_bits`` (inclusive).
    """

    trials: int = 100
    message: str | None = "watermark"
    message_hex: str | None = None
    random_message_bits: tuple[int, int] = (8, 128)
    n_dims: int = 500
    window: int = 1
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    diffusion: DiffusionConfig | None = None
    tfpr_grid: tuple[float, ...] = (0.01, 0.05)
    key_policy: str = "per_sample_nonce"
    cohort: str = "watermarked"
    fixed_uniform_seed: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("must be >= 1", "trials")
        if self.n_dims < 1:
            raise ConfigError("must be >= 1", "n_dims")
        if not 1 <= self.window <= 16:
            raise ConfigError("must be in [1, 16]", "window")
        grid = tuple(float(p) for p in self.tfpr_grid)
        if not grid or any(not 0 < p < 1 for p in grid) or list(grid) != sorted(set(grid)):
            raise ConfigError("must be non-empty, strictly ascending, inside (0, 1)", "tfpr_grid")
        object.__setattr__(self, "tfpr_grid", grid)
        if self.key_policy not in KEY_POLICIES:
            raise ConfigError(f"must be one of {KEY_POLICIES}", "key_policy")
        if self.cohort not in COHORTS:
            raise ConfigError(f"must be one of {COHORTS}", "cohort")
        lo, hi = self.random_message_bits
        if not 1 <= lo <= hi:
            raise ConfigError("must satisfy 1 <= low <= high", "random_message_bits")
        object.__setattr__(self, "random_message_bits", (int(lo), int(hi)))
        if self.message_hex is not None and self.message is not None:
            raise ConfigError("give either message or message_hex, not both", "message_hex")
        fixed = self.fixed_message()
        longest = fixed.m_bits if fixed is not None else hi
        if longest > self.n_bits:
            raise ConfigError(f"{longest}-bit message exceeds capacity {self.n_bits}", "message")
        if self.channel.kind == "segment_resample" and self.channel.stop > self.n_dims:
            raise ConfigError("segment exceeds latent dims", "channel")

    @property
    def n_bits(self) -> int:
        return self.n_dims * self.window

    def fixed_message(self) -> WatermarkMessage | None:
        try:
            if self.message_hex is not None:
                return WatermarkMessage.from_hex(self.message_hex)
            if self.message is not None:
                return message_from_text(self.message)
        except ValueError as exc:
            raise ConfigError(str(exc), "message") from exc
        return None

    @classmethod
    def from_dict(cls, data: dict) -> "BenchConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown field(s) {unknown}", unknown[0])
        kwargs = dict(data)
        if "channel" in kwargs:
            if not isinstance(kwargs["channel"], str):
                raise ConfigError("must be a channel string such as 'bit_flip:0.056'", "channel")
            try:
                kwargs["channel"] = ChannelSpec.parse(kwargs["channel"])
            except ChannelError as exc:
                raise ConfigError(str(exc), "channel") from exc
        if kwargs.get("diffusion") is not None:
            diff = kwargs["diffusion"]
            if not isinstance(diff, dict):
                raise ConfigError("must be an object", "diffusion")
            bad = sorted(set(diff) - {f.name for f in fields(DiffusionConfig)})
            if bad:
                raise ConfigError(f"unknown field(s) {bad}", f"diffusion.{bad[0]}")
            kwargs["diffusion"] = DiffusionConfig(**diff)
        for name in ("tfpr_grid", "random_message_bits"):
            if name in kwargs:
                if not isinstance(kwargs[name], (list, tuple)):
                    raise ConfigError("must be a list", name)
                kwargs[name] = tuple(kwargs[name])
        for name in ("trials", "n_dims", "window", "seed"):
            if name in kwargs and (not isinstance(kwargs[name], int) or isinstance(kwargs[name], bool)):
                raise ConfigError("must be an integer", name)
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        out = asdict(self)
        out["channel"] = self.channel.to_string()
        out["tfpr_grid"] = list(self.tfpr_grid)
        out["random_message_bits"] = list(self.random_message_bits)
        return out


@dataclass
class TrialRecord:
    trial: int
    hamming: int
    n_bits: int
    p_value: float
    detected: dict
    bit_accuracy: float
    exact_match: bool
    m_bits: int
    message_bit_errors: int
    fingerprint: str
    cipher_fingerprint: str
    roundtrip_mse: float | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["detected"] = {repr(k): v for k, v in self.detected.items()}
        return out


def _fingerprint(latent: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(latent, dtype="<f8").tobytes()).hexdigest()


def _trial_key(config: BenchConfig, master_key: KeyMaterial, rng: np.random.Generator) -> KeyMaterial:
    if config.key_policy == "fixed":
        return master_key
    if config.key_policy == "per_sample_nonce":
        return master_key.with_nonce(rng.bytes(12))
    return KeyMaterial(rng.bytes(32), rng.bytes(12))


def _trial_message(config: BenchConfig, fixed, rng) -> WatermarkMessage:
    if fixed is not None:
        return fixed
    lo, hi = config.random_message_bits
    m = int(rng.integers(lo, hi + 1))
    return WatermarkMessage(rng.integers(0, 2, size=m, dtype=np.uint8))


def _run_one(config, trial, master_key, fixed_message, diffusion) -> TrialRecord:
    key_rng, msg_rng, u_rng, chan_rng, clean_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence([config.seed, trial]).spawn(5)
    )
    key = _trial_key(config, master_key, key_rng)
    message = _trial_message(config, fixed_message, msg_rng)
    n_bits = config.n_bits
    reference = reference_ciphertext(message, key, n_bits)

    if config.cohort == "watermarked":
        u_seed = config.seed if config.fixed_uniform_seed else u_rng
        latent = sample_latent(reference, config.window, UniformSource(u_seed))
    else:
        latent = clean_rng.standard_normal(config.n_dims)
    fingerprint = _fingerprint(latent)

    mse = None
    if diffusion is not None:
        schedule, denoiser, dcfg = diffusion
        z0 = ddim_sample(latent, schedule, denoiser, dcfg.mode, dcfg.num_steps)
        recovered = ddim_inverse(z0, schedule, denoiser, dcfg.mode, dcfg.num_steps)
        mse = float(np.mean((recovered - latent) ** 2))
        latent = recovered

    if config.channel.acts_on_bits:
        cipher = apply_channel(reverse_sample(latent, config.window, n_bits), config.channel, chan_rng)
    else:
        latent = apply_channel(latent, config.channel, chan_rng)
        cipher = reverse_sample(latent, config.window, n_bits)

    eta = hamming(cipher, reference)
    detected = {t: eta <= threshold_for_tfpr(n_bits, t) for t in config.tfpr_grid}
    ext = extract_bits(cipher, key, message.m_bits, truth=message)
    return TrialRecord(
        trial=trial,
        hamming=eta,
        n_bits=n_bits,
        p_value=p_value(eta, n_bits),
        detected=detected,
        bit_accuracy=1.0 - eta / n_bits,
        exact_match=bool(ext.exact_match),
        m_bits=message.m_bits,
        message_bit_errors=int(np.count_nonzero(ext.message != message.payload)),
        fingerprint=fingerprint,
        cipher_fingerprint=hashlib.sha256(np.packbits(cipher).tobytes()).hexdigest(),
        roundtrip_mse=mse,
    )


def run_trials(config: BenchConfig, trial_ids=None) -> list[TrialRecord]:
    """Run the cohort described by ``config``; ``trial_ids`` selects/reorders trials."""
    if trial_ids is None:
        trial_ids = range(config.trials)
    master_key = keygen(seed=config.seed)
    fixed_message = config.fixed_message()
    diffusion = None
    if config.diffusion is not None:
        diffusion = (*config.diffusion.build(), config.diffusion)
    return [_run_one(config, int(t), master_key, fixed_message, diffusion) for t in trial_ids]


def clean_config(config: BenchConfig) -> BenchConfig:
    """Unwatermarked control cohort matching ``config`` on its own RNG stream."""
    return replace(config, cohort="clean", seed=config.seed + 1_000_003)


# --- summaries -------------------------------------------------------------

def _detected_at(records, tfpr: float) -> np.ndarray:
    return np.array([r.hamming <= threshold_for_tfpr(r.n_bits, tfpr) for r in records], dtype=bool)


def detection_rate(records, tfpr: float) -> float:
    if not records:
        raise ValueError("no records")
    return float(_detected_at(records, tfpr).mean())


@dataclass
class DetectionCurve:
    tfpr: list
    watermarked_mean: list
    watermarked_std: list
    clean_mean: list
    clean_std: list
    n_folds: int
    fold_size: int


def _folds(n_records: int, n_folds: int, fold_size: int, rng) -> list[np.ndarray]:
    size = min(fold_size, n_records // n_folds)
    if size < 1:
        raise ValueError(f"{n_records} records cannot fill {n_folds} folds")
    order = rng.permutation(n_records)
    return [order[i * size:(i + 1) * size] for i in range(n_folds)]


def detection_curve(records, clean_records, tfpr_grid, n_folds: int = 6,
                    fold_size: int = 200, seed: int = 0) -> DetectionCurve:
    """Mean and standard deviation of detection rates across folds, per TFPR.

    Folds are disjoint random subsets of ``fold_size`` records (shrunk when
    the cohort is too small).
    """
    if not records or not clean_records:
        raise ValueError("both cohorts must be non-empty")
    rng = np.random.default_rng(seed)
    curve = DetectionCurve([], [], [], [], [], n_folds, 0)
    folds_w = _folds(len(records), n_folds, fold_size, rng)
    folds_c = _folds(len(clean_records), n_folds, fold_size, rng)
    curve.fold_size = min(len(folds_w[0]), len(folds_c[0]))
    for t in tfpr_grid:
        det_w, det_c = _detected_at(records, t), _detected_at(clean_records, t)
        rates_w = [det_w[f].mean() for f in folds_w]
        rates_c = [det_c[f].mean() for f in folds_c]
        curve.tfpr.append(float(t))
        curve.watermarked_mean.append(float(np.mean(rates_w)))
        curve.watermarked_std.append(float(np.std(rates_w)))
        curve.clean_mean.append(float(np.mean(rates_c)))
        curve.clean_std.append(float(np.std(rates_c)))
    return curve


@dataclass
class RocCurve:
    points: list
    auc: float


def roc(records_watermarked, records_clean) -> RocCurve:
    """ROC from raw Hamming distances (lower means more watermarked).

    The threshold sweeps every integer from -1 to ``n_bits``, so tied scores
    move together and the curve runs from (0, 0) to (1, 1).
    """
    if not records_watermarked or not records_clean:
        raise ValueError("both cohorts must be non-empty")
    n = max(r.n_bits for r in (*records_watermarked, *records_clean))
    hw = np.bincount([r.hamming for r in records_watermarked], minlength=n + 1)
    hc = np.bincount([r.hamming for r in records_clean], minlength=n + 1)
    tpr = np.concatenate([[0.0], np.cumsum(hw) / hw.sum()])
    fpr = np.concatenate([[0.0], np.cumsum(hc) / hc.sum()])
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve([(float(f), float(t)) for f, t in zip(fpr, tpr)], auc)


def summarize(records, tfprs=(0.01, 0.05)) -> dict:
    out = {f"tpr_at_{t!r}": detection_rate(records, t) for t in tfprs}
    out["extraction"] = float(np.mean([r.exact_match for r in records]))
    out["bit_accuracy"] = float(np.mean([r.bit_accuracy for r in records]))
    mses = [r.roundtrip_mse for r in records if r.roundtrip_mse is not None]
    out["roundtrip_mse"] = float(np.mean(mses)) if mses else None
    return out


TABLE3_COLUMNS = ("method", "channel", "tpr_at_1pct_fpr", "tpr_at_5pct_fpr", "extraction", "bit_accuracy")

# Flip rate = 1 - bit accuracy of the pipeline being emulated.
TABLE3_PROFILES = (
    ("identity_diffusion_roundtrip", "identity", True),
    ("diffusion_only", "bit_flip:0.056", False),
    ("2d_decoded", "bit_flip:0.307", False),
    ("3d_decoded", "bit_flip:0.506", False),
)


def table3_report(trials: int = 1000, seed: int = 0, message: str = "X",
                  n_dims: int = 500, diffusion: DiffusionConfig | None = None) -> list[dict]:
    """TPR at 1%/5% FPR, extraction rate and bit accuracy per channel profile."""
    diffusion = diffusion or DiffusionConfig()
    rows = []
    for method, channel, with_diffusion in TABLE3_PROFILES:
        cfg = BenchConfig(trials=trials, message=message, n_dims=n_dims,
                          channel=ChannelSpec.parse(channel),
                          diffusion=diffusion if with_diffusion else None,
                          tfpr_grid=(0.01, 0.05), seed=seed)
        s = summarize(run_trials(cfg))
        rows.append({
            "method": method,
            "channel": channel,
            "tpr_at_1pct_fpr": s["tpr_at_0.01"],
            "tpr_at_5pct_fpr": s["tpr_at_0.05"],
            "extraction": s["extraction"],
            "bit_accuracy": s["bit_accuracy"],
        })
    return rows


def uniqueness_experiment(trials: int = 100, seed: int = 0, message: str = "watermark",
                          n_dims: int = 500) -> dict:
    """Distinct embedded latents under different key/nonce/uniform reuse policies."""
    if trials < 2:
        raise ValueError("uniqueness needs at least two samples")
    variants = {
        "fixed": dict(key_policy="fixed", fixed_uniform_seed=True),
        "fixed_key_fresh_u": dict(key_policy="fixed", fixed_uniform_seed=False),
        "per_sample_nonce": dict(key_policy="per_sample_nonce", fixed_uniform_seed=True),
        "per_sample_key": dict(key_policy="per_sample_key", fixed_uniform_seed=True),
    }
    out = {}
    for name, kw in variants.items():
        cfg = BenchConfig(trials=trials, message=message, n_dims=n_dims, seed=seed, **kw)
        records = run_trials(cfg)
        latents = {r.fingerprint for r in records}
        out[name] = {
            "distinct_latents": len(latents),
            "distinct_ciphertexts": len({r.cipher_fingerprint for r in records}),
            "distinct_fraction": len(latents) / trials,
        }
    return out


# --- export ----------------------------------------------------------------

def _dump_json(obj, path: Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    return path


def export_records(records, path) -> Path:
    return _dump_json({"records": [r.to_dict() for r in records]}, path)


def export_roc(curve: RocCurve, path) -> Path:
    return _dump_json({"auc": curve.auc, "points": [list(p) for p in curve.points]}, path)


def export_json(obj, path) -> Path:
    return _dump_json(obj, path)


def _write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def export_table(rows: list[dict], path, columns=TABLE3_COLUMNS) -> Path:
    return _write_csv(path, columns, ([row[c] for c in columns] for row in rows))


def export_curve(curve: DetectionCurve, path) -> Path:
    """Plot-ready ``x, y, sigma`` rows, one series per cohort."""
    rows = []
    for series, means, stds in (("watermarked", curve.watermarked_mean, curve.watermarked_std),
                                ("clean", curve.clean_mean, curve.clean_std)):
        rows.extend((series, x, y, s) for x, y, s in zip(curve.tfpr, means, stds))
    return _write_csv(path, ("series", "x", "y", "sigma"), rows)


def export_roc_points(curve: RocCurve, path) -> Path:
    return _write_csv(path, ("x", "y", "sigma"), ((f, t, 0.0) for f, t in curve.points))


# --- config-driven entry point ----------------------------------------------

EXPERIMENTS = ("trials", "roc", "curve", "table3", "uniqueness")


def load_config(path) -> dict:
    """Parse a bench config file, turning JSON syntax errors into ConfigError."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object")
    return data


def _pop(data, name, default, kind):
    value = data.pop(name, default)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"must be of type {getattr(kind, '__name__', kind)}", name)
    return value


def run_experiment(data: dict, out_dir) -> dict[str, Path]:
    """Run the experiment a config dict describes and write its report files."""
    data = dict(data)
    experiment = data.pop("experiment", "trials")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"must be one of {EXPERIMENTS}", "experiment")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if experiment == "table3":
        trials = _pop(data, "trials", 1000, int)
        seed = _pop(data, "seed", 0, int)
        message = _pop(data, "message", "X", str)
        n_dims = _pop(data, "n_dims", 500, int)
        if data:
            raise ConfigError(f"unknown field(s) {sorted(data)}", sorted(data)[0])
        rows = table3_report(trials=trials, seed=seed, message=message, n_dims=n_dims)
        return {"table3": export_table(rows, out / "table3.csv")}

    if experiment == "uniqueness":
        trials = _pop(data, "trials", 100, int)
        seed = _pop(data, "seed", 0, int)
        message = _pop(data, "message", "watermark", str)
        if data:
            raise ConfigError(f"unknown field(s) {sorted(data)}", sorted(data)[0])
        return {"uniqueness": export_json(uniqueness_experiment(trials, seed, message),
                                          out / "uniqueness.json")}

    n_folds = _pop(data, "n_folds", 6, int) if experiment == "curve" else None
    fold_size = _pop(data, "fold_size", 200, int) if experiment == "curve" else None
    config = BenchConfig.from_dict(data)
    records = run_trials(config)
    files = {"records": export_records(records, out / "records.json")}
    summary = summarize(records, config.tfpr_grid)
    if experiment == "trials":
        files["summary"] = export_json(summary, out / "summary.json")
        return files

    clean = run_trials(clean_config(config))
    if experiment == "roc":
        curve = roc(records, clean)
        files["roc"] = export_roc(curve, out / "roc.json")
        files["roc_points"] = export_roc_points(curve, out / "roc_points.csv")
        return files
    curve = detection_curve(records, clean, config.tfpr_grid, n_folds, fold_size, seed=config.seed)
    files["curve"] = export_curve(curve, out / "curve.csv")
    return files


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n)
