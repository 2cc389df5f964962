"""Synthetic ground truth: closed-form resource laws plus controlled noise.

Stands in for profiled cluster runs. Because the laws are known, tests can
check that trained agents actually recover them.

Per resource class the noiseless laws are::

    io_time   = io_bytes / disk_bw * t_io_s_per_gb
    exec_time = flop_count/1e9 * t_flop_s_per_gop * (2500/cpu_mhz)
                    * (1 + contention_slope * jobs_running) + io_time
    mem_peak  = mem_overhead_bytes + mem_slope * input_bytes
    mem_avg   = t_mem_factor * mem_peak
    transfer  = 0 on the same node, else max(latency) + payload / min(bandwidth)

``t_io_s_per_gb`` is the seconds per GB at a 1 GB/s reference disk, so it
scales the raw ``bytes / bandwidth`` time. Memory values are rounded to whole
bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Mapping

from .errors import ConfigError
from .records import MetricVector, ProfileRecord
from .rng import SplitMix64, derive_seed
from .workflow import AppFeatures, DynFeatures, StaticFeatures

REFERENCE_MHZ = 2500.0


@dataclass(frozen=True)
class ClassLaw:
    t_flop_s_per_gop: float = 1.0
    t_io_s_per_gb: float = 1.0
    t_mem_factor: float = 0.6
    contention_slope: float = 0.1
    mem_overhead_bytes: int = 50 * 2**20
    mem_slope: float = 1.5

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"law coefficient {name} must be finite and >= 0, got {value!r}")
        if self.t_mem_factor > 1:
            raise ConfigError("t_mem_factor must be <= 1 so that mem_avg <= mem_peak")


@dataclass(frozen=True)
class OracleLaw:
    classes: Mapping[str, ClassLaw]
    noise_rel_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.classes:
            raise ConfigError("law needs at least one resource class")
        if not 0.0 <= self.noise_rel_sigma <= 0.5:
            raise ConfigError("noise_rel_sigma must lie in [0, 0.5]")

    def for_class(self, resource_class: str) -> ClassLaw:
        try:
            return self.classes[resource_class]
        except KeyError:
            raise ConfigError(f"law has no class {resource_class!r}") from None

    def fingerprint(self) -> str:
        """Hash of the coefficients only (noise and seed excluded)."""
        doc = {k: asdict(v) for k, v in sorted(self.classes.items())}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "v": 1,
            "classes": {k: asdict(v) for k, v in sorted(self.classes.items())},
            "noise_rel_sigma": self.noise_rel_sigma,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "OracleLaw":
        if d.get("v", 1) != 1:
            raise ConfigError(f"unsupported law version {d.get('v')!r}")
        try:
            classes = {k: ClassLaw(**v) for k, v in d["classes"].items()}
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed law document: {exc}") from None
        return cls(classes, float(d.get("noise_rel_sigma", 0.0)), int(d.get("seed", 0)))


def io_time(law: ClassLaw, app: AppFeatures, st: StaticFeatures) -> float:
    return app.io_bytes / st.disk_bw_bytes_per_s * law.t_io_s_per_gb


def compute_time(law: ClassLaw, app: AppFeatures, st: StaticFeatures, dyn: DynFeatures) -> float:
    return (
        (app.flop_count / 1e9)
        * law.t_flop_s_per_gop
        * (REFERENCE_MHZ / st.cpu_mhz)
        * (1.0 + law.contention_slope * dyn.jobs_running)
    )


def ground_truth(
    law: OracleLaw | ClassLaw,
    app: AppFeatures,
    st: StaticFeatures,
    dyn: DynFeatures,
    resource_class: str | None = None,
) -> MetricVector:
    """Noiseless metrics; ``net_transfer_s`` is 0 here (see :func:`transfer_truth`)."""
    cl = law.for_class(resource_class) if isinstance(law, OracleLaw) else law
    t_io = io_time(cl, app, st)
    mem_peak = round(cl.mem_overhead_bytes + cl.mem_slope * app.input_bytes)
    return MetricVector(
        exec_time_s=compute_time(cl, app, st, dyn) + t_io,
        mem_peak_bytes=mem_peak,
        mem_avg_bytes=round(cl.t_mem_factor * mem_peak),
        io_time_s=t_io,
        net_transfer_s=0.0,
    )


def transfer_truth(
    payload_bytes: int,
    st_from: StaticFeatures,
    st_to: StaticFeatures,
    same_node: bool,
) -> float:
    if same_node:
        return 0.0
    latency = max(st_from.net_latency_s, st_to.net_latency_s)
    return latency + payload_bytes / min(st_from.net_bw_bytes_per_s, st_to.net_bw_bytes_per_s)


# -- dataset generation -------------------------------------------------------

Range = tuple[float, float]


@dataclass(frozen=True)
class FeatureSampler:
    """Closed ranges ``(lo, hi)`` sampled uniformly; integer fields are rounded.

    ``static_by_class`` overrides static ranges for particular classes so
    that classes can model distinct hardware.
    """

    input_bytes: Range = (1e8, 2e10)
    flop_count: Range = (5e11, 5e12)
    branching_factor: Range = (1.0, 20.0)
    io_bytes: Range = (1e8, 2e10)
    cores: Range = (8, 32)
    cpu_mhz: Range = (2000.0, 3000.0)
    cache_kb: Range = (8192, 32768)
    mem_total_bytes: Range = (64 * 2**30, 256 * 2**30)
    disk_bw_bytes_per_s: Range = (2e8, 2e9)
    net_bw_bytes_per_s: Range = (1e9, 1e10)
    net_latency_s: Range = (1e-5, 1e-3)
    jobs_running: Range = (0, 8)
    queue_wait_s: Range = (0.0, 600.0)
    load_average: Range = (0.0, 16.0)
    mem_used_bytes: Range = (0, 32 * 2**30)
    static_by_class: Mapping[str, Mapping[str, Range]] = field(default_factory=dict)

    APP_FIELDS = ("input_bytes", "flop_count", "branching_factor", "io_bytes")
    STATIC_FIELDS = ("cores", "cpu_mhz", "cache_kb", "mem_total_bytes",
                     "disk_bw_bytes_per_s", "net_bw_bytes_per_s", "net_latency_s")
    DYN_FIELDS = ("jobs_running", "queue_wait_s", "load_average", "mem_used_bytes")

    def __post_init__(self) -> None:
        for name in self.APP_FIELDS + self.STATIC_FIELDS + self.DYN_FIELDS:
            self._check(name, getattr(self, name))
        for cls_name, overrides in self.static_by_class.items():
            for name, rng in overrides.items():
                if name not in self.STATIC_FIELDS:
                    raise ConfigError(f"static override {name!r} for {cls_name!r} is not a static field")
                self._check(name, rng)

    @staticmethod
    def _check(name: str, rng: Any) -> None:
        try:
            lo, hi = (float(v) for v in rng)
        except (TypeError, ValueError):
            raise ConfigError(f"range for {name} must be a (lo, hi) pair, got {rng!r}") from None
        if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo or lo < 0:
            raise ConfigError(f"empty or invalid range for {name}: {rng!r}")

    def static_range(self, resource_class: str, name: str) -> Range:
        return self.static_by_class.get(resource_class, {}).get(name, getattr(self, name))

    def to_dict(self) -> dict:
        d = {name: list(getattr(self, name)) for name in self.APP_FIELDS + self.STATIC_FIELDS + self.DYN_FIELDS}
        d["static_by_class"] = {
            c: {k: list(v) for k, v in sorted(o.items())} for c, o in sorted(self.static_by_class.items())
        }
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "FeatureSampler":
        known = set(cls.APP_FIELDS + cls.STATIC_FIELDS + cls.DYN_FIELDS)
        unknown = set(d) - known - {"static_by_class"}
        if unknown:
            raise ConfigError(f"unknown sampler fields {sorted(unknown)}")
        kwargs: dict[str, Any] = {k: tuple(v) for k, v in d.items() if k in known}
        kwargs["static_by_class"] = {
            c: {k: tuple(v) for k, v in o.items()} for c, o in d.get("static_by_class", {}).items()
        }
        return cls(**kwargs)


def _draw(rng: SplitMix64, bounds: Range, integer: bool = False):
    lo, hi = bounds
    value = rng.uniform_range(float(lo), float(hi))
    return round(value) if integer else value


def sample_features(
    rng: SplitMix64, sampler: FeatureSampler, resource_class: str
) -> tuple[AppFeatures, StaticFeatures, DynFeatures, StaticFeatures]:
    """One draw of (app, node static, dyn, sending-peer static)."""
    mix_raw = [rng.uniform() + 1e-3 for _ in range(5)]
    total = math.fsum(mix_raw)
    mix = [v / total for v in mix_raw]
    app = AppFeatures(
        input_bytes=_draw(rng, sampler.input_bytes, True),
        flop_count=_draw(rng, sampler.flop_count, True),
        branching_factor=_draw(rng, sampler.branching_factor),
        io_bytes=_draw(rng, sampler.io_bytes, True),
        instruction_mix=tuple(mix),
    )

    def static(cls_name: str) -> StaticFeatures:
        r = sampler.static_range
        return StaticFeatures(
            cores=max(1, _draw(rng, r(cls_name, "cores"), True)),
            cpu_mhz=max(1.0, _draw(rng, r(cls_name, "cpu_mhz"))),
            cache_kb=max(1, _draw(rng, r(cls_name, "cache_kb"), True)),
            mem_total_bytes=max(1, _draw(rng, r(cls_name, "mem_total_bytes"), True)),
            disk_bw_bytes_per_s=max(1.0, _draw(rng, r(cls_name, "disk_bw_bytes_per_s"))),
            net_bw_bytes_per_s=max(1.0, _draw(rng, r(cls_name, "net_bw_bytes_per_s"))),
            net_latency_s=_draw(rng, r(cls_name, "net_latency_s")),
        )

    st = static(resource_class)
    dyn = DynFeatures(
        jobs_running=_draw(rng, sampler.jobs_running, True),
        queue_wait_s=_draw(rng, sampler.queue_wait_s),
        load_average=_draw(rng, sampler.load_average),
        mem_used_bytes=_draw(rng, sampler.mem_used_bytes, True),
    )
    peer = static(resource_class)
    return app, st, dyn, peer


def _noisy(value: float, rng: SplitMix64, sigma: float) -> float:
    if sigma == 0.0:
        return value
    return max(0.0, value * (1.0 + sigma * rng.gauss()))


def generate_dataset(
    law: OracleLaw,
    n: int,
    sampler: FeatureSampler | None = None,
    resource_classes: Iterable[str] | None = None,
    seed: int | None = None,
) -> list[ProfileRecord]:
    """``n`` reproducible records, cycling through ``resource_classes``.

    Record ``i`` draws from its own stream ``derive_seed(seed, i)``, so
    records can be generated in any order or in parallel. Each metric gets an
    independent multiplicative noise factor; ``mem_avg`` is then capped at
    ``mem_peak``. Every record also carries an inbound transfer sample of
    ``input_bytes`` from a randomly drawn peer of the same class.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    sampler = sampler or FeatureSampler()
    classes = sorted(resource_classes if resource_classes is not None else law.classes)
    if not classes:
        raise ConfigError("no resource classes to generate")
    for c in classes:
        law.for_class(c)
    seed = law.seed if seed is None else seed
    sigma = law.noise_rel_sigma
    fp = law.fingerprint()
    records = []
    for i in range(n):
        cls_name = classes[i % len(classes)]
        rng = SplitMix64(derive_seed(seed, i))
        app, st, dyn, peer = sample_features(rng, sampler, cls_name)
        truth = ground_truth(law, app, st, dyn, cls_name)
        transfer = transfer_truth(app.input_bytes, peer, st, same_node=False)
        mem_peak = round(_noisy(truth.mem_peak_bytes, rng, sigma))
        observed = MetricVector(
            exec_time_s=_noisy(truth.exec_time_s, rng, sigma),
            mem_peak_bytes=mem_peak,
            mem_avg_bytes=min(round(_noisy(truth.mem_avg_bytes, rng, sigma)), mem_peak),
            io_time_s=_noisy(truth.io_time_s, rng, sigma),
            net_transfer_s=_noisy(transfer, rng, sigma),
        )
        records.append(ProfileRecord(
            record_id=f"synth-{fp[:8]}-{seed}-{i}",
            resource_class=cls_name,
            app=app,
            static_f=st,
            dyn=dyn,
            observed=observed,
            timestamp=float(i),
            peer=peer,
            meta={"law": fp, "seed": seed, "index": i},
        ))
    return records
