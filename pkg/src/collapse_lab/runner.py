"""Experiment runner: configs, streaming output, checkpoints, analysis.

A run directory contains::

    config.txt        exact config text (the hash in the manifest is of
                      these bytes)
    series.ndjson     one record per sample:
                      {"t","mass","F","D","sup","collapses","residual"}
                      (collapse info is filled by analyze, not the run)
    snapshots/        field / profile CSV dumps at configured triggers
    checkpoint.bin    latest checkpoint (versioned, checksummed)
    manifest.json     config hash, grid, status and stop reason
    collapse_report.* written when the density cap fired
    analysis/         written by analyze()

Runs are deterministic: identical config (and seed) produce a
byte-identical series, and resuming an interrupted run continues it
sample-for-sample.  To make that true across resume, checkpoints store
the potential alongside the density (the elliptic solve is warm-started
from the previous step) plus the snapshot-trigger state.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import diagnostics, rescale
from .grid import (
    RADIAL_DISK,
    SQUARE,
    CompactBumpProfile,
    ConstantProfile,
    Field,
    GaussianProfile,
    GridSpec,
    TwoBumpsProfile,
    make_initial,
    read_field_csv,
    write_field_csv,
)
from .poisson import DIRICHLET, NEUMANN, solve_radial_dirichlet
from .radial_oracle import (
    MassProfile,
    oracle_density,
    oracle_step,
    profile_from_field,
    read_profile_csv,
    stable_oracle_dt,
    write_profile_csv,
)
from .stepper import (
    DENSITY_CAP_HIT,
    MAX_STEPS,
    REACHED_T_END,
    SimState,
    StepperConfig,
    StopRule,
    run_until,
    _solve_model,
)

RUN_VERSION = 1
_CHECKPOINT_MAGIC = b"CLLABCK\x01"

_INTERRUPTED = "interrupted"


class ConfigError(ValueError):
    """A config key is missing, unknown, or out of range."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config field {key!r}: {message}")


class CheckpointError(RuntimeError):
    """Checkpoint unreadable: bad magic, version, or checksum."""


_KNOWN_KEYS = {
    "model", "domain", "n", "side_length", "disk_radius", "profile",
    "lambda", "lambda1", "lambda2", "center_x", "center_y", "width",
    "center1_x", "center1_y", "center2_x", "center2_y",
    "core_mass", "core_width", "ring_center", "ring_width",
    "perturb", "seed",
    "dt_safety", "dt_max", "positivity_mode", "t_end", "max_steps",
    "density_cap", "density_cap_factor", "sample_every", "snapshot_times",
    "snapshot_sup_factor", "checkpoint_every", "output_dir",
}


@dataclass
class RunConfig:
    """Validated flat key-value experiment configuration."""

    model: str = DIRICHLET
    domain: str = SQUARE
    n: int = 64
    length: float = 1.0
    profile: str = "gaussian"
    lam: float = 4.0
    lam2: float | None = None
    center: tuple = (0.5, 0.5)
    center2: tuple = (0.7, 0.5)
    width: float = 0.1
    core_mass: float | None = None
    core_width: float | None = None
    ring_center: float | None = None
    ring_width: float | None = None
    perturb: float = 0.0
    seed: int = 0
    dt_safety: float = 0.3
    dt_max: float | None = None
    positivity_mode: str = "clip-and-rebalance"
    t_end: float = math.inf
    max_steps: int | None = None
    density_cap: float | None = None
    density_cap_factor: float | None = None
    sample_every: int = 1
    snapshot_times: tuple = ()
    snapshot_sup_factor: float | None = None
    checkpoint_every: int | None = None
    output_dir: str = "runs/out"
    text: str = dc_field(default="", repr=False)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        kv = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
            key, val = (part.strip() for part in line.split("=", 1))
            if key not in _KNOWN_KEYS:
                raise ConfigError(key, "unknown key")
            if key in kv:
                raise ConfigError(key, "duplicate key")
            kv[key] = val

        def take(key, conv, default=None, required=False):
            if key not in kv:
                if required:
                    raise ConfigError(key, "required")
                return default
            try:
                return conv(kv[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(key, f"bad value {kv[key]!r} ({exc})") from None

        domain = take("domain", str, SQUARE)
        if domain not in (SQUARE, RADIAL_DISK):
            raise ConfigError("domain", f"must be square or radial-disk, got {domain!r}")
        if domain == SQUARE:
            if "disk_radius" in kv:
                raise ConfigError("disk_radius", "only valid for radial-disk domains")
            length = take("side_length", float, 1.0)
        else:
            if "side_length" in kv:
                raise ConfigError("side_length", "only valid for square domains")
            length = take("disk_radius", float, 1.0)

        model = take("model", str, DIRICHLET)
        if model not in (DIRICHLET, NEUMANN):
            raise ConfigError("model", f"must be dirichlet or neumann, got {model!r}")
        if domain == RADIAL_DISK and model != DIRICHLET:
            raise ConfigError("model", "the radial oracle implements the dirichlet model only")

        profile = take("profile", str, "gaussian")
        if profile not in ("constant", "gaussian", "bump", "two-bumps", "core-ring"):
            raise ConfigError("profile", f"unknown profile {profile!r}")
        core_mass = core_width = ring_center = ring_width = None
        if profile == "two-bumps":
            lam = take("lambda1", float, required=True)
            lam2 = take("lambda2", float, required=True)
            center = (take("center1_x", float, required=True), take("center1_y", float, required=True))
            center2 = (take("center2_x", float, required=True), take("center2_y", float, required=True))
        elif profile == "core-ring":
            if domain != RADIAL_DISK:
                raise ConfigError("profile", "core-ring is a radial-disk profile")
            lam = take("lambda", float, required=True)
            lam2 = None
            center = (0.0, 0.0)
            center2 = (0.0, 0.0)
            core_mass = take("core_mass", float, required=True)
            core_width = take("core_width", float, required=True)
            ring_center = take("ring_center", float, required=True)
            ring_width = take("ring_width", float, required=True)
            if not (0.0 < core_mass < lam):
                raise ConfigError("core_mass", "must lie strictly between 0 and lambda")
        else:
            lam = take("lambda", float, required=True)
            lam2 = None
            center = (take("center_x", float, 0.5 if domain == SQUARE else 0.0),
                      take("center_y", float, 0.5 if domain == SQUARE else 0.0))
            center2 = (0.0, 0.0)
        if lam <= 0 or (lam2 is not None and lam2 <= 0):
            raise ConfigError("lambda", "total mass must be positive")

        snapshot_times = ()
        if kv.get("snapshot_times", "").strip():
            snapshot_times = tuple(
                sorted(float(s) for s in kv["snapshot_times"].split(",") if s.strip())
            )

        cfg = cls(
            model=model,
            domain=domain,
            n=take("n", int, 64),
            length=length,
            profile=profile,
            lam=lam,
            lam2=lam2,
            center=center,
            center2=center2,
            width=take("width", float, 0.1),
            core_mass=core_mass,
            core_width=core_width,
            ring_center=ring_center,
            ring_width=ring_width,
            perturb=take("perturb", float, 0.0),
            seed=take("seed", int, 0),
            dt_safety=take("dt_safety", float, 0.3),
            dt_max=take("dt_max", float, None),
            positivity_mode=take("positivity_mode", str, "clip-and-rebalance"),
            t_end=take("t_end", float, math.inf),
            max_steps=take("max_steps", int, None),
            density_cap=take("density_cap", float, None),
            density_cap_factor=take("density_cap_factor", float, None),
            sample_every=take("sample_every", int, 1),
            snapshot_times=snapshot_times,
            snapshot_sup_factor=take("snapshot_sup_factor", float, None),
            checkpoint_every=take("checkpoint_every", int, None),
            output_dir=take("output_dir", str, "runs/out"),
            text=text,
        )
        if cfg.sample_every < 1:
            raise ConfigError("sample_every", "must be >= 1")
        if cfg.n < 8:
            raise ConfigError("n", "need at least 8 cells")
        if not (math.isfinite(cfg.t_end) or cfg.max_steps is not None
                or cfg.density_cap is not None or cfg.density_cap_factor is not None):
            raise ConfigError("t_end", "no stop rule: set t_end, max_steps, or a density cap")
        return cfg

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()

    def grid_spec(self) -> GridSpec:
        return GridSpec(self.domain, self.n, self.length)

    def initial_profile(self):
        if self.profile == "constant":
            return ConstantProfile(self.lam)
        if self.profile == "gaussian":
            return GaussianProfile(self.center, self.width, self.lam)
        if self.profile == "bump":
            return CompactBumpProfile(self.center, self.width, self.lam)
        if self.profile == "core-ring":
            return None  # assembled directly in build_initial_field
        return TwoBumpsProfile(self.center, self.center2, self.width, self.lam, self.lam2)

    def total_mass(self) -> float:
        return self.lam + (self.lam2 or 0.0)

    def _build_core_ring(self) -> Field:
        spec = self.grid_spec()
        core = make_initial(spec, CompactBumpProfile((0.0, 0.0), self.core_width, self.core_mass))
        r = spec.axis_centers()
        ring = np.exp(-((r - self.ring_center) ** 2) / (2.0 * self.ring_width ** 2))
        ring *= (self.lam - self.core_mass) / float(np.sum(ring * spec.cell_areas()))
        return Field(spec, core.values + ring)

    def build_initial_field(self) -> Field:
        if self.profile == "core-ring":
            f = self._build_core_ring()
        else:
            f = make_initial(self.grid_spec(), self.initial_profile())
        if self.perturb > 0.0:
            rng = np.random.default_rng(self.seed)
            noise = 1.0 + self.perturb * rng.standard_normal(f.values.shape)
            vals = np.maximum(f.values * noise, 0.0)
            vals *= self.total_mass() / float(np.sum(vals * f.grid.cell_areas()))
            f = Field(f.grid, vals)
        return f


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def write_checkpoint(path, header: dict, arrays: dict) -> None:
    """Versioned binary checkpoint: header JSON, float64 LE arrays, sha256."""
    header = dict(header)
    header["run_version"] = RUN_VERSION
    header["arrays"] = [
        {"name": name, "shape": list(arr.shape)} for name, arr in arrays.items()
    ]
    blob = bytearray()
    blob += _CHECKPOINT_MAGIC
    blob += struct.pack("<I", RUN_VERSION)
    hdr = json.dumps(header, sort_keys=True).encode("utf-8")
    blob += struct.pack("<I", len(hdr))
    blob += hdr
    for _, arr in arrays.items():
        blob += np.asarray(arr, dtype="<f8").tobytes()
    blob += hashlib.sha256(bytes(blob)).digest()
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(bytes(blob))
    tmp.replace(path)


def read_checkpoint(path):
    """Return (header, arrays), verifying magic, version, and checksum."""
    blob = Path(path).read_bytes()
    if len(blob) < len(_CHECKPOINT_MAGIC) + 8 + 32:
        raise CheckpointError("checkpoint truncated")
    if blob[: len(_CHECKPOINT_MAGIC)] != _CHECKPOINT_MAGIC:
        raise CheckpointError("bad checkpoint magic")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checkpoint checksum mismatch (file corrupted?)")
    off = len(_CHECKPOINT_MAGIC)
    (version,) = struct.unpack_from("<I", body, off)
    off += 4
    if version != RUN_VERSION:
        raise CheckpointError(
            f"checkpoint version {version} does not match this runner (version {RUN_VERSION})"
        )
    (hlen,) = struct.unpack_from("<I", body, off)
    off += 4
    header = json.loads(body[off : off + hlen].decode("utf-8"))
    off += hlen
    arrays = {}
    for meta in header["arrays"]:
        count = int(np.prod(meta["shape"])) if meta["shape"] else 1
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=off).reshape(meta["shape"])
        arrays[meta["name"]] = arr.astype(float)
        off += 8 * count
    if off != len(body):
        raise CheckpointError("checkpoint has trailing bytes")
    return header, arrays


# ---------------------------------------------------------------------------
# Sampling and snapshot machinery shared by the two drivers
# ---------------------------------------------------------------------------


def _series_record(t, mass, free_e, diss, sup):
    return {
        "t": t,
        "mass": mass,
        "F": free_e,
        "D": diss,
        "sup": sup,
        "collapses": [],
        "residual": None,
    }


def _dump_record(fh, rec) -> None:
    fh.write(json.dumps(rec, separators=(",", ":"), allow_nan=False) + "\n")
    fh.flush()


class _SnapshotPlan:
    """Time-crossing and sup-growth snapshot triggers."""

    def __init__(self, pending_times, sup_factor, last_snap_sup):
        self.pending = list(pending_times)
        self.sup_factor = sup_factor
        self.last_snap_sup = last_snap_sup

    def due(self, t: float, sup: float) -> bool:
        hit = False
        while self.pending and t >= self.pending[0]:
            self.pending.pop(0)
            hit = True
        if self.sup_factor is not None and sup >= self.sup_factor * self.last_snap_sup:
            self.last_snap_sup = sup
            hit = True
        return hit


class _RunWriter:
    def __init__(self, run_dir: Path, append: bool, snapshots: list):
        self.run_dir = run_dir
        (run_dir / "snapshots").mkdir(exist_ok=True)
        series_path = run_dir / "series.ndjson"
        self.sup_series = []
        if append and series_path.exists():
            with open(series_path, "r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        self.sup_series.append((rec["t"], rec["sup"]))
        self.series = open(series_path, "a" if append else "w", encoding="utf-8")
        self.snapshots = snapshots

    def sample(self, t, mass, free_e, diss, sup) -> None:
        _dump_record(self.series, _series_record(t, mass, free_e, diss, sup))
        self.sup_series.append((t, sup))

    def snapshot(self, obj, t: float, step: int, sup: float) -> None:
        if self.snapshots and self.snapshots[-1]["step"] == step:
            return
        name = f"step{step:08d}.csv"
        path = self.run_dir / "snapshots" / name
        if isinstance(obj, MassProfile):
            write_profile_csv(obj, path)
        else:
            write_field_csv(obj, path)
        self.snapshots.append({"step": step, "t": t, "sup": sup, "path": f"snapshots/{name}"})

    def close(self):
        self.series.close()


def _write_manifest(run_dir: Path, cfg: RunConfig, status, reason, final, snapshots, n_samples, extra=None):
    manifest = {
        "run_version": RUN_VERSION,
        "config_sha256": cfg.sha256,
        "kind": cfg.domain,
        "model": cfg.model,
        "grid": {"domain_kind": cfg.domain, "n": cfg.n, "length": cfg.length},
        "status": status,
        "stop_reason": reason,
        "n_samples": n_samples,
        "final": final,
        "snapshots": snapshots,
    }
    if extra:
        manifest.update(extra)
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


def _count_lines(path: Path) -> int:
    if not path.exists():
        return 0
    with open(path, "r", encoding="utf-8") as fh:
        return sum(1 for _ in fh)


# ---------------------------------------------------------------------------
# The two drive loops
# ---------------------------------------------------------------------------


def _radial_state(profile: MassProfile) -> SimState:
    """Wrap a mass profile as a (density, potential) state for diagnostics."""
    dens = oracle_density(profile)
    pot = solve_radial_dirichlet(dens)
    return SimState(dens, pot, profile.t, 0, 0.0, DIRICHLET)


def _drive_square(cfg, run_dir, writer, state, plan, interrupt_after, emit_initial,
                  initial_sup=None):
    stepper_cfg = StepperConfig(cfg.dt_safety, None, cfg.positivity_mode)
    if initial_sup is None:
        initial_sup = state.field.sup
    cap = cfg.density_cap
    if cap is None and cfg.density_cap_factor is not None:
        cap = cfg.density_cap_factor * initial_sup
    eff_max = cfg.max_steps
    if interrupt_after is not None:
        eff_max = interrupt_after if eff_max is None else min(eff_max, interrupt_after)

    def emit_sample(st):
        rec = diagnostics.free_energy(st)
        writer.sample(st.t, rec.mass, rec.free_energy, rec.dissipation, st.field.sup)

    immediate_stop = (
        state.t >= cfg.t_end
        or (eff_max is not None and state.step_index >= eff_max)
        or (cap is not None and state.field.sup >= cap)
    )
    if immediate_stop and emit_initial:
        # nothing will run: leave the series empty, manifest only
        stop = StopRule(cfg.t_end, eff_max, cap)
        state, reason = run_until(state, stepper_cfg, stop)
        return state, reason, initial_sup

    if emit_initial:
        emit_sample(state)
        writer.snapshot(state.field, state.t, state.step_index, state.field.sup)

    def on_step(st):
        if st.step_index % cfg.sample_every == 0:
            emit_sample(st)
        if plan.due(st.t, st.field.sup):
            writer.snapshot(st.field, st.t, st.step_index, st.field.sup)
        if cfg.checkpoint_every and st.step_index % cfg.checkpoint_every == 0:
            _checkpoint_square(run_dir, cfg, st, plan, initial_sup)

    stop = StopRule(cfg.t_end, eff_max, cap)
    state, reason = run_until(state, stepper_cfg, stop, on_step=on_step)

    interrupted = (
        interrupt_after is not None
        and reason == MAX_STEPS
        and state.step_index >= interrupt_after
        and (cfg.max_steps is None or state.step_index < cfg.max_steps)
    )
    if not interrupted and state.step_index % cfg.sample_every != 0:
        emit_sample(state)  # always record the stopping state
    writer.snapshot(state.field, state.t, state.step_index, state.field.sup)
    _checkpoint_square(run_dir, cfg, state, plan, initial_sup)
    return state, (None if interrupted else reason), initial_sup


def _checkpoint_square(run_dir, cfg, state, plan, initial_sup):
    write_checkpoint(
        run_dir / "checkpoint.bin",
        {
            "kind": SQUARE,
            "model": cfg.model,
            "grid": {"n": cfg.n, "length": cfg.length},
            "t": state.t,
            "step_index": state.step_index,
            "dt_last": state.dt_last,
            "initial_sup": initial_sup,
            "pending_snapshot_times": list(plan.pending),
            "last_snap_sup": plan.last_snap_sup,
            "config_sha256": cfg.sha256,
        },
        {"field": state.field.values, "potential": state.potential.values},
    )


def _drive_radial(cfg, run_dir, writer, profile, plan, interrupt_after, emit_initial,
                  initial_sup=None, steps_done=0):
    if initial_sup is None:
        initial_sup = oracle_density(profile).sup
    cap = cfg.density_cap
    if cap is None and cfg.density_cap_factor is not None:
        cap = cfg.density_cap_factor * initial_sup
    eff_max = cfg.max_steps
    if interrupt_after is not None:
        eff_max = interrupt_after if eff_max is None else min(eff_max, interrupt_after)

    def emit_sample(p, sup):
        rec = diagnostics.free_energy(_radial_state(p))
        writer.sample(p.t, p.total, rec.free_energy, rec.dissipation, sup)

    sup_now = oracle_density(profile).sup
    immediate_stop = (
        profile.t >= cfg.t_end
        or (eff_max is not None and steps_done >= eff_max)
        or (cap is not None and sup_now >= cap)
    )
    if immediate_stop and emit_initial:
        reason = REACHED_T_END if profile.t >= cfg.t_end else (
            MAX_STEPS if eff_max is not None and steps_done >= eff_max else DENSITY_CAP_HIT
        )
        return profile, steps_done, reason, initial_sup

    if emit_initial:
        emit_sample(profile, sup_now)
        writer.snapshot(profile, profile.t, steps_done, sup_now)

    reason = None
    while True:
        sup = oracle_density(profile).sup
        if profile.t >= cfg.t_end - 1e-15 * max(cfg.t_end if math.isfinite(cfg.t_end) else 1.0, 1.0):
            reason = REACHED_T_END
            break
        if eff_max is not None and steps_done >= eff_max:
            reason = MAX_STEPS
            break
        if cap is not None and sup >= cap:
            reason = DENSITY_CAP_HIT
            break
        dt = stable_oracle_dt(profile, safety=cfg.dt_safety, dt_max=cfg.dt_max)
        if math.isfinite(cfg.t_end):
            dt = min(dt, cfg.t_end - profile.t)
        profile = oracle_step(profile, dt)
        steps_done += 1
        sup = oracle_density(profile).sup
        if steps_done % cfg.sample_every == 0:
            emit_sample(profile, sup)
        if plan.due(profile.t, sup):
            writer.snapshot(profile, profile.t, steps_done, sup)
        if cfg.checkpoint_every and steps_done % cfg.checkpoint_every == 0:
            _checkpoint_radial(run_dir, cfg, profile, steps_done, plan, initial_sup)

    interrupted = (
        interrupt_after is not None
        and reason == MAX_STEPS
        and steps_done >= interrupt_after
        and (cfg.max_steps is None or steps_done < cfg.max_steps)
    )
    sup = oracle_density(profile).sup
    if not interrupted and steps_done % cfg.sample_every != 0:
        emit_sample(profile, sup)
    writer.snapshot(profile, profile.t, steps_done, sup)
    _checkpoint_radial(run_dir, cfg, profile, steps_done, plan, initial_sup)
    return profile, steps_done, (None if interrupted else reason), initial_sup


def _checkpoint_radial(run_dir, cfg, profile, steps_done, plan, initial_sup):
    write_checkpoint(
        run_dir / "checkpoint.bin",
        {
            "kind": RADIAL_DISK,
            "model": cfg.model,
            "grid": {"n": cfg.n, "length": cfg.length},
            "t": profile.t,
            "step_index": steps_done,
            "dt_last": 0.0,
            "initial_sup": initial_sup,
            "pending_snapshot_times": list(plan.pending),
            "last_snap_sup": plan.last_snap_sup,
            "config_sha256": cfg.sha256,
        },
        {"mass": profile.mass, "radii": profile.radii},
    )


# ---------------------------------------------------------------------------
# Public verbs
# ---------------------------------------------------------------------------


def _final_collapse_report(cfg, run_dir, sup_series, final_field, final_t):
    try:
        est = diagnostics.estimate_blowup_time(sup_series)
    except diagnostics.NoBlowupTrendError:
        return None
    if cfg.domain == RADIAL_DISK:
        x0 = (0.0, 0.0)
    else:
        ij = np.unravel_index(int(np.argmax(final_field.values)), final_field.values.shape)
        c = final_field.grid.axis_centers()
        x0 = (float(c[ij[0]]), float(c[ij[1]]))
    try:
        report = diagnostics.detect_collapses(final_field, final_t, est, x0, b=20.0)
    except ValueError:
        return None
    diagnostics.write_collapse_csv(report, run_dir / "collapse_report.csv")
    payload = {
        "t": report.t,
        "t_hat": est.t_hat,
        "window": {"x0": list(report.window_center), "b": report.window_b,
                   "radius": report.window_radius, "mass": report.window_mass},
        "balls": [
            {"x": bl.center[0], "y": bl.center[1], "r": bl.radius,
             "mass": bl.mass, "quantized": bl.quantized}
            for bl in report.balls
        ],
        "residual_mass": report.residual_mass,
        "epsilon": report.epsilon,
    }
    (run_dir / "collapse_report.json").write_text(
        json.dumps(payload, indent=2) + "\n", encoding="utf-8"
    )
    return payload


def run(config, output_dir=None, interrupt_after_steps=None) -> Path:
    """Execute a run from a config (text, path, or RunConfig).

    Returns the run directory.  ``interrupt_after_steps`` stops the run
    early with a checkpoint and an "interrupted" manifest, which resume()
    continues deterministically; it exists for testing resume and for
    staged long runs.
    """
    if isinstance(config, RunConfig):
        cfg = config
    else:
        text = str(config)
        if "\n" not in text and Path(text).exists():
            text = Path(text).read_text(encoding="utf-8")
        cfg = RunConfig.from_text(text)

    run_dir = Path(output_dir) if output_dir is not None else Path(cfg.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(cfg.text, encoding="utf-8")

    snapshots = []
    writer = _RunWriter(run_dir, append=False, snapshots=snapshots)
    plan = _SnapshotPlan(cfg.snapshot_times, cfg.snapshot_sup_factor, math.inf)

    try:
        if cfg.domain == SQUARE:
            field = cfg.build_initial_field()
            pot = _solve_model(field, cfg.model, 1e-10)
            state = SimState(field, pot, 0.0, 0, 0.0, cfg.model)
            plan.last_snap_sup = field.sup
            state, reason, _ = _drive_square(
                cfg, run_dir, writer, state, plan, interrupt_after_steps, emit_initial=True
            )
            final = {"t": state.t, "step": state.step_index, "sup": state.field.sup}
            final_field, final_t = state.field, state.t
        else:
            field = cfg.build_initial_field()
            profile = profile_from_field(field, t=0.0)
            plan.last_snap_sup = oracle_density(profile).sup
            profile, steps, reason, _ = _drive_radial(
                cfg, run_dir, writer, profile, plan, interrupt_after_steps, emit_initial=True
            )
            final = {"t": profile.t, "step": steps, "sup": oracle_density(profile).sup}
            final_field, final_t = oracle_density(profile), profile.t
    finally:
        writer.close()

    status = "completed" if reason is not None else _INTERRUPTED
    extra = {}
    if reason == DENSITY_CAP_HIT:
        payload = _final_collapse_report(cfg, run_dir, writer.sup_series, final_field, final_t)
        if payload is not None:
            extra["collapse_report"] = "collapse_report.json"
    _write_manifest(run_dir, cfg, status, reason, final,
                    snapshots, _count_lines(run_dir / "series.ndjson"), extra)
    return run_dir


def resume(checkpoint_path) -> Path:
    """Continue an interrupted run bit-identically from its checkpoint."""
    checkpoint_path = Path(checkpoint_path)
    run_dir = checkpoint_path.parent
    header, arrays = read_checkpoint(checkpoint_path)
    cfg = RunConfig.from_text((run_dir / "config.txt").read_text(encoding="utf-8"))
    if header.get("config_sha256") != cfg.sha256:
        raise CheckpointError("checkpoint does not belong to this run's config.txt")

    manifest_path = run_dir / "manifest.json"
    manifest = json.loads(manifest_path.read_text(encoding="utf-8")) if manifest_path.exists() else {}
    if manifest.get("status") == "completed":
        print(f"run in {run_dir} already completed ({manifest.get('stop_reason')}); nothing to resume")
        return run_dir

    snapshots = list(manifest.get("snapshots", []))
    writer = _RunWriter(run_dir, append=True, snapshots=snapshots)
    plan = _SnapshotPlan(
        header.get("pending_snapshot_times", []),
        cfg.snapshot_sup_factor,
        header.get("last_snap_sup", math.inf),
    )
    try:
        if header["kind"] == SQUARE:
            spec = cfg.grid_spec()
            field = Field(spec, arrays["field"])
            from .poisson import Potential

            pot = Potential(spec, arrays["potential"], cfg.model, 0.0)
            state = SimState(field, pot, header["t"], int(header["step_index"]),
                             header["dt_last"], cfg.model)
            state, reason, _ = _drive_square(
                cfg, run_dir, writer, state, plan, None, emit_initial=False,
                initial_sup=header["initial_sup"],
            )
            final = {"t": state.t, "step": state.step_index, "sup": state.field.sup}
            final_field, final_t = state.field, state.t
        else:
            profile = MassProfile(arrays["radii"], arrays["mass"], header["t"])
            profile, steps, reason, _ = _drive_radial(
                cfg, run_dir, writer, profile, plan, None, emit_initial=False,
                initial_sup=header["initial_sup"], steps_done=int(header["step_index"]),
            )
            final = {"t": profile.t, "step": steps, "sup": oracle_density(profile).sup}
            final_field, final_t = oracle_density(profile), profile.t
    finally:
        writer.close()

    extra = {}
    if reason == DENSITY_CAP_HIT:
        payload = _final_collapse_report(cfg, run_dir, writer.sup_series, final_field, final_t)
        if payload is not None:
            extra["collapse_report"] = "collapse_report.json"
    _write_manifest(run_dir, cfg, "completed", reason, final,
                    snapshots, _count_lines(run_dir / "series.ndjson"), extra)
    return run_dir


# ---------------------------------------------------------------------------
# Analysis
# ---------------------------------------------------------------------------


def _load_series(run_dir: Path):
    records = []
    with open(run_dir / "series.ndjson", "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    return records


def _load_snapshots(run_dir: Path, manifest):
    """Yield (field, t) pairs for every stored snapshot, oldest first."""
    out = []
    kind = manifest["kind"]
    for meta in manifest.get("snapshots", []):
        path = run_dir / meta["path"]
        if kind == RADIAL_DISK:
            profile = read_profile_csv(path, t=meta["t"])
            out.append((oracle_density(profile), float(meta["t"]), profile))
        else:
            out.append((read_field_csv(path), float(meta["t"]), None))
    return out


def analyze(run_dir, x0=None, b_list=(5.0, 10.0, 20.0), epsilon=0.5,
            y_max=10.0, n_y=64, c3=3.0) -> dict:
    """Post-process a completed run directory into report files.

    Blowup runs get the collapse quantization verdicts, the parabolic
    window sweep, the residual-mass series over the last decade of
    (T_hat - t), and the envelope series with T_hat sensitivity.  Runs
    without a blowup trend are reported as global-existence runs.
    """
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    records = _load_series(run_dir)
    out_dir = run_dir / "analysis"
    out_dir.mkdir(exist_ok=True)

    sup_series = [(r["t"], r["sup"]) for r in records]
    summary = {"run": str(run_dir), "stop_reason": manifest.get("stop_reason")}

    trend = None
    if len(records) >= 2:
        recs = [
            diagnostics.EnergyRecord(r["t"], r["F"], r["D"], r["mass"], manifest["model"])
            for r in records
        ]
        trend = diagnostics.energy_trend_check(recs)
        summary["energy_trend"] = {
            "violations": list(trend.violations),
            "max_defect": trend.max_defect,
        }

    try:
        est = diagnostics.estimate_blowup_time(sup_series)
    except diagnostics.NoBlowupTrendError as exc:
        summary["verdict"] = "global-existence run"
        summary["detail"] = str(exc)
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
        return summary

    summary["verdict"] = "blowup"
    summary["t_hat"] = est.t_hat
    summary["fit_window"] = list(est.fit_window)
    summary["fit_residual"] = est.fit_residual

    snaps = [(f, t, p) for (f, t, p) in _load_snapshots(run_dir, manifest) if t < est.t_hat]
    if not snaps:
        summary["detail"] = "no usable snapshots before T_hat"
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
        return summary

    final_field, final_t, _ = snaps[-1]
    if x0 is None:
        if manifest["kind"] == RADIAL_DISK:
            x0 = (0.0, 0.0)
        else:
            ij = np.unravel_index(int(np.argmax(final_field.values)), final_field.values.shape)
            c = final_field.grid.axis_centers()
            x0 = (float(c[ij[0]]), float(c[ij[1]]))
    summary["x0"] = list(x0)

    b_main = max(b_list)
    residual_rows = []
    enriched = []
    gaps = np.array([est.t_hat - t for (_, t, _) in snaps])
    last_decade = gaps <= 10.0 * gaps.min()
    final_report = None
    for (fld, t, _), in_decade in zip(snaps, last_decade):
        try:
            rep = diagnostics.detect_collapses(fld, t, est, x0, b_main, epsilon, c3)
        except ValueError:
            continue
        row = {
            "t": t,
            "gap": est.t_hat - t,
            "window_mass": rep.window_mass,
            "ball_masses": [bl.mass for bl in rep.balls],
            "residual": rep.residual_mass,
            "in_last_decade": bool(in_decade),
        }
        residual_rows.append(row)
        enriched.append(
            {
                "t": t,
                "mass": None,
                "F": None,
                "D": None,
                "sup": fld.sup,
                "collapses": [
                    {"x": bl.center[0], "y": bl.center[1], "r": bl.radius,
                     "mass": bl.mass, "quantized": bl.quantized}
                    for bl in rep.balls
                ],
                "residual": rep.residual_mass,
            }
        )
        final_report = rep

    if final_report is not None:
        diagnostics.write_collapse_csv(final_report, out_dir / "collapses.csv")
        summary["collapses"] = [
            {"x": bl.center[0], "y": bl.center[1], "r": bl.radius,
             "mass": bl.mass, "quantized": bl.quantized}
            for bl in final_report.balls
        ]
        summary["quantized_count"] = sum(bl.quantized for bl in final_report.balls)
        summary["residual_mass"] = final_report.residual_mass
    summary["residual_series"] = residual_rows

    with open(out_dir / "records.ndjson", "w", encoding="utf-8") as fh:
        for rec in enriched:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")

    sweep = diagnostics.mass_window_sweep(final_field, final_t, est, x0, b_list)
    summary["window_sweep"] = sweep
    with open(out_dir / "windows.ndjson", "w", encoding="utf-8") as fh:
        for row in sweep:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")

    env = rescale.envelope_with_sensitivity(
        [(fld, t) for (fld, t, _) in snaps], est, x0, y_max, n_y
    )
    summary["envelope"] = {
        "plateau": env["plateau"],
        "plateau_shift": env["plateau_shift"],
        "stable": env["stable"],
    }
    with open(out_dir / "envelope.ndjson", "w", encoding="utf-8") as fh:
        for row in env["series"]:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")

    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return summary
