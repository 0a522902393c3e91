"""End-to-end orchestration: dataset generation, training, inference,
evaluation, sweeps, and statistical self-validation.

Layout under the run output directory:

    dataset/
        manifest.json                   scene list, splits, content hashes
        scene_000/
            scene.json                  placed primitives + mast position
            gt.dm                       ground-truth distance matrix
            snr_<tag>.dm  var_<tag>.dm  detp_<tag>.dm   per transmit power
            degraded_<tag>.dm           simulated measurement per power
    checkpoint.json / checkpoint.bin    trained denoiser
    loss.csv                            per-step raw and smoothed loss
    predictions/<method>/<tag>/         scene_<id>.dm + scene_<id>.ply
    metrics.csv / summary.json          per-scene metrics + trend verdicts
    sweep/                              detection-ratio / variance-scale axes
    validation/                         estimator statistics report

Determinism: every random draw comes from a stream keyed by purpose tag,
the global seed, and stable indices (scene id, step, power), never by
worker id or wall clock, so outputs are independent of --jobs and reruns
are byte-identical. The degradation stream is keyed by scene only; sweep
points and power levels therefore share the same underlying noise and
mask fields (common random numbers), which makes trend comparisons
low-variance.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .baselines import mt_enhance, passthrough
from .config import ExperimentConfig
from .diffusion import (ConditioningBundle, DiffusionSchedule, denormalize_dm,
                        fill_invalid_nearest, noise_matched_start, normalize_dm,
                        sparsity_matched_start)
from .errors import ConfigError, GenerationError, SamplerDivergence, ValidationFailure
from .geometry import DistanceMatrix, dm_to_pointcloud, pointcloud_to_ply
from .gridio import ensure_dir, load_grid, read_json, save_grid, sha256_file, write_json
from .metrics import evaluate_pair
from .network import DenoiserNet, build_denoiser_input
from .rng import TAG_DEGRADE, TAG_SAMPLER, TAG_SCENE, as_stream
from .scene import generate_scene, raycast
from .sensing import StatMaps, admissibility, build_stat_maps, dbm_to_linear, degrade
from .training import load_checkpoint, save_checkpoint, train
from .waveform import PulseConfig, validate_crb, validate_detection

METHODS = ("nsadm", "mt", "passthrough")

# Offsets that keep the per-purpose stream keys disjoint: inference seeds mix
# in a value derived from the physical sweep point, not from list positions,
# so a partial --power-dbm run reproduces the full run's outputs exactly.
_POWER_KEY_OFFSET = 1_000_000
_DETECTION_KEY_OFFSET = 5_000_000
_VARIANCE_KEY_OFFSET = 6_000_000

# Batched reverse sampling stacks at most this many scenes per network call;
# fixed (not tied to --jobs) so batch composition never varies between runs.
_INFER_CHUNK = 8


def power_tag(power_dbm: float) -> str:
    """Filename-safe tag for a power level: -20.0 -> 'm20dbm', 2.5 -> 'p2_5dbm'."""
    sign = "m" if power_dbm < 0 else "p"
    return sign + f"{abs(float(power_dbm)):g}".replace(".", "_") + "dbm"


def parse_power_tag(tag: str) -> float:
    if not tag.endswith("dbm") or tag[0] not in "mp":
        raise ValueError(f"not a power tag: {tag!r}")
    value = float(tag[1:-3].replace("_", "."))
    return -value if tag[0] == "m" else value


def scene_name(index: int) -> str:
    return f"scene_{index:03d}"


def _power_key(power_dbm: float) -> int:
    key = int(round(float(power_dbm) * 1000)) + _POWER_KEY_OFFSET
    if key < 0:
        raise ConfigError(f"power {power_dbm} dBm is outside the supported range")
    return key


def _float_cell(value) -> str:
    return f"{value:.9g}"


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    with open(path, "w", newline="") as f:
        f.write(buf.getvalue())


def _nonincreasing(values, rel_tol=1e-9):
    return all(b <= a * (1 + rel_tol) + 1e-12 for a, b in zip(values, values[1:]))


def _nondecreasing(values, rel_tol=1e-9):
    return all(b >= a * (1 - rel_tol) - 1e-12 for a, b in zip(values, values[1:]))


# ---------------------------------------------------------------------------
# dataset generation


def _build_scene_bundle(cfg: ExperimentConfig, grid, scene_index: int):
    """Generate one admissible scene and everything derived from it."""
    top_power = dbm_to_linear(max(cfg.sweep.power_dbm))
    rejections = 0
    for attempt in range(cfg.run.max_regenerations + 1):
        scene = generate_scene(cfg.scene, (TAG_SCENE, cfg.run.seed, scene_index, attempt))
        gt, rcs_map = raycast(scene, grid)
        maps_top = build_stat_maps(gt, rcs_map, top_power, cfg.sensing)
        ok, mean_p, mean_v = admissibility(maps_top, cfg.run.admissibility_rho0,
                                           cfg.run.admissibility_sigma0_sq)
        if ok:
            break
        rejections += 1
    else:
        raise GenerationError(
            f"admissibility filter exhausted for scene {scene_index}: "
            f"{cfg.run.max_regenerations + 1} candidates rejected "
            f"(last: mean detection {mean_p:.4f} vs floor {cfg.run.admissibility_rho0}, "
            f"mean variance {mean_v:.4f} vs ceiling {cfg.run.admissibility_sigma0_sq})")

    per_power = {}
    for p in cfg.sweep.power_dbm:
        maps = build_stat_maps(gt, rcs_map, dbm_to_linear(p), cfg.sensing)
        observed = degrade(gt, maps, (TAG_DEGRADE, cfg.run.seed, scene_index))
        per_power[p] = (maps, observed)
    return scene, gt, per_power, rejections


def _write_scene_bundle(ds_dir, cfg, grid, scene_index):
    scene, gt, per_power, rejections = _build_scene_bundle(cfg, grid, scene_index)
    name = scene_name(scene_index)
    sdir = os.path.join(ds_dir, name)
    ensure_dir(sdir)
    written = ["scene.json", "gt.dm"]
    with open(os.path.join(sdir, "scene.json"), "w") as f:
        f.write(scene.to_json())
    save_grid(os.path.join(sdir, "gt.dm"), gt.values, gt.valid, "dm")
    for p, (maps, observed) in per_power.items():
        tag = power_tag(p)
        save_grid(os.path.join(sdir, f"snr_{tag}.dm"), maps.snr, maps.valid, "snr")
        save_grid(os.path.join(sdir, f"var_{tag}.dm"), maps.var, maps.valid, "var")
        save_grid(os.path.join(sdir, f"detp_{tag}.dm"), maps.detp, maps.valid, "detp")
        save_grid(os.path.join(sdir, f"degraded_{tag}.dm"),
                  observed.values, observed.valid, "dm")
        written += [f"{kind}_{tag}.dm" for kind in ("snr", "var", "detp", "degraded")]
    rel_files = sorted(os.path.join(name, fn) for fn in written)
    return scene_index, rejections, rel_files


def cmd_generate(cfg: ExperimentConfig, jobs: int = 1) -> str:
    """Build the dataset directory; returns its path."""
    ds_dir = os.path.join(cfg.run.out_dir, "dataset")
    ensure_dir(ds_dir)
    grid = cfg.grid.make_grid()
    indices = list(range(cfg.split.n_scenes))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(
                lambda i: _write_scene_bundle(ds_dir, cfg, grid, i), indices))
    else:
        results = [_write_scene_bundle(ds_dir, cfg, grid, i) for i in indices]

    results.sort(key=lambda r: r[0])
    total_rejections = sum(r[1] for r in results)
    files = {}
    for _, _, rel_files in results:
        for rel in rel_files:
            files[rel] = sha256_file(os.path.join(ds_dir, rel))

    # The embedded config records the recipe, not the location: out_dir is
    # normalized so runs of one config into different directories stay
    # byte-identical.
    manifest_config = cfg.to_dict()
    manifest_config["run"]["out_dir"] = "."
    manifest = {
        "format": "nsadm-dataset-v1",
        "n_scenes": cfg.split.n_scenes,
        "powers_dbm": [float(p) for p in cfg.sweep.power_dbm],
        "splits": {scene_name(i): cfg.split.split_of(i) for i in indices},
        "seed": cfg.run.seed,
        "d_max": cfg.run.d_max,
        "admissibility": {
            "rho0": cfg.run.admissibility_rho0,
            "sigma0_sq": cfg.run.admissibility_sigma0_sq,
            "gate_power_dbm": float(max(cfg.sweep.power_dbm)),
            "rejections": total_rejections,
        },
        "files": files,
        "config": manifest_config,
    }
    write_json(os.path.join(ds_dir, "manifest.json"), manifest)
    return ds_dir


# ---------------------------------------------------------------------------
# dataset access


def _require_dataset(ds_dir):
    manifest_path = os.path.join(ds_dir, "manifest.json")
    if not os.path.isfile(manifest_path):
        raise FileNotFoundError(
            f"no dataset manifest at {manifest_path}; run 'generate' first")
    return read_json(manifest_path)


def load_gt(ds_dir, scene_index) -> DistanceMatrix:
    values, valid, kind = load_grid(os.path.join(ds_dir, scene_name(scene_index), "gt.dm"))
    if kind != "dm":
        raise ValueError("ground-truth grid has the wrong kind")
    return DistanceMatrix(values, valid)


def load_maps(ds_dir, scene_index, power_dbm) -> StatMaps:
    sdir = os.path.join(ds_dir, scene_name(scene_index))
    tag = power_tag(power_dbm)
    snr, valid, _ = load_grid(os.path.join(sdir, f"snr_{tag}.dm"))
    var, _, _ = load_grid(os.path.join(sdir, f"var_{tag}.dm"))
    detp, _, _ = load_grid(os.path.join(sdir, f"detp_{tag}.dm"))
    return StatMaps(snr, var, detp, valid)


def load_degraded(ds_dir, scene_index, power_dbm) -> DistanceMatrix:
    path = os.path.join(ds_dir, scene_name(scene_index),
                        f"degraded_{power_tag(power_dbm)}.dm")
    values, valid, _ = load_grid(path)
    return DistanceMatrix(values, valid)


def split_indices(manifest, split: str):
    return sorted(int(name.split("_")[1]) for name, s in manifest["splits"].items()
                  if s == split)


# ---------------------------------------------------------------------------
# training


def cmd_train(cfg: ExperimentConfig, dataset_dir=None, progress=None) -> str:
    """Train the denoiser on the training split; returns the checkpoint prefix.

    Each training entry pairs a clean scene with its statistics maps at one
    transmit power, so one network learns the whole power range; measurements
    are re-synthesized per step inside the training loop.
    """
    ds_dir = dataset_dir or os.path.join(cfg.run.out_dir, "dataset")
    manifest = _require_dataset(ds_dir)
    entries = []
    for i in split_indices(manifest, "train"):
        clean = load_gt(ds_dir, i)
        for p in manifest["powers_dbm"]:
            entries.append((clean, load_maps(ds_dir, i, p)))
    net, history = train(entries, cfg.schedule, cfg.train, cfg.run.d_max,
                         progress=progress)

    ensure_dir(cfg.run.out_dir)
    prefix = os.path.join(cfg.run.out_dir, "checkpoint")
    save_checkpoint(prefix, net, cfg.schedule, cfg.train, cfg.run.d_max,
                    extra={"n_train_entries": len(entries)})
    rows = [(step, _float_cell(r), _float_cell(s))
            for step, (r, s) in enumerate(zip(history["raw"], history["smoothed"]))]
    _write_csv(os.path.join(cfg.run.out_dir, "loss.csv"),
               ("step", "raw_loss", "smoothed_loss"), rows)
    return prefix


# ---------------------------------------------------------------------------
# inference


def batched_reverse_sample(net: DenoiserNet, conds, sched: DiffusionSchedule,
                           seeds, stochastic=False, start_steps=None):
    """Run reverse chains for several measurements, sharing network batches.

    Matches reverse_sample applied per element (same seeds, same schedule):
    chains that start at different steps join the shared loop at their own
    start, and each element draws from its own stream in the same order as
    the per-sample code path.
    """
    n = len(conds)
    if len(seeds) != n:
        raise ValueError("need one seed per conditioning bundle")
    if start_steps is None:
        start_steps = [sched.n_steps] * n
    start_steps = [int(t) for t in start_steps]
    for t in start_steps:
        if not 1 <= t <= sched.n_steps:
            raise ConfigError(f"start step {t} outside [1, {sched.n_steps}]")
    rngs = [as_stream(s) for s in seeds]
    nvars = [np.asarray(c.norm_var, dtype=float) for c in conds]
    states = [None] * n

    for t in range(max(start_steps), 0, -1):
        for k in range(n):
            if start_steps[k] == t:
                obs_norm = normalize_dm(conds[k].observed_dm.values, conds[k].d_max)
                init = fill_invalid_nearest(obs_norm, conds[k].observed_mask)
                states[k] = init + np.sqrt(sched.sigma(t) * nvars[k]) \
                    * rngs[k].standard_normal(nvars[k].shape)
        active = [k for k in range(n) if states[k] is not None]
        ratio = sched.sigma(t - 1) / sched.sigma(t)
        eta_sq = max(sched.sigma(t - 1) * (sched.sigma(t) - sched.sigma(t - 1)), 0.0)
        for lo in range(0, len(active), _INFER_CHUNK):
            group = active[lo:lo + _INFER_CHUNK]
            x = np.stack([build_denoiser_input(states[k], t, conds[k],
                                               sched.n_steps, dtype=np.float32)
                          for k in group])
            preds = net.forward(x)
            for row, k in enumerate(group):
                pred = np.asarray(preds[row, 0], dtype=float)
                if not np.all(np.isfinite(pred)):
                    raise SamplerDivergence(t)
                states[k] = pred + ratio * (states[k] - pred)
                if stochastic and eta_sq > 0.0:
                    states[k] = states[k] + np.sqrt(eta_sq * nvars[k]) \
                        * rngs[k].standard_normal(nvars[k].shape)
                if not np.all(np.isfinite(states[k])):
                    raise SamplerDivergence(t)

    out = []
    for k in range(n):
        values = np.clip(denormalize_dm(states[k], conds[k].d_max), 0.0, None)
        out.append(DistanceMatrix(values, np.ones(values.shape, dtype=bool)))
    return out


def _infer_start_step(cfg: ExperimentConfig, sched: DiffusionSchedule,
                      cond: ConditioningBundle, maps: StatMaps) -> int:
    if cfg.run.infer_start == "matched":
        return sparsity_matched_start(sched, float(cond.det_prob.mean()),
                                      float(cond.observed_mask.mean()))
    if cfg.run.infer_start == "noise":
        observed = cond.observed_mask
        if not observed.any():
            return sched.n_steps
        # Mean measurement variance in normalized units, compared against the
        # schedule's variance ladder: the chain enters where its noise level
        # is a few times the measurement's own, leaving room to refine
        # without discarding the measurement's precision.
        mean_nvar = float(np.mean(maps.var[observed])) / cond.d_max**2
        return noise_matched_start(sched, cfg.run.infer_match_scale * mean_nvar)
    return sched.n_steps


def _sampler_seed(cfg: ExperimentConfig, scene_index: int, point_key: int):
    return (TAG_SAMPLER, cfg.run.seed, scene_index, point_key)


def cmd_infer(cfg: ExperimentConfig, method: str, dataset_dir=None,
              checkpoint=None, powers=None, jobs: int = 1) -> str:
    """Run one recovery method over the test split; returns its output dir."""
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")
    ds_dir = dataset_dir or os.path.join(cfg.run.out_dir, "dataset")
    manifest = _require_dataset(ds_dir)
    test_ids = split_indices(manifest, "test")
    powers = list(cfg.sweep.power_dbm) if powers is None else [float(p) for p in powers]
    grid = cfg.grid.make_grid()
    out_root = os.path.join(cfg.run.out_dir, "predictions", method)

    net = None
    sched = cfg.schedule
    if method == "nsadm":
        prefix = checkpoint or os.path.join(cfg.run.out_dir, "checkpoint")
        if not os.path.isfile(prefix + ".json"):
            raise FileNotFoundError(
                f"no checkpoint at {prefix}.json; run 'train' first")
        net, sched, _, ck_dmax = load_checkpoint(prefix)
        if abs(ck_dmax - cfg.run.d_max) > 1e-9:
            raise ConfigError(
                f"checkpoint was trained with d_max={ck_dmax}, config has {cfg.run.d_max}")

    def run_power(p):
        tag_dir = os.path.join(out_root, power_tag(p))
        ensure_dir(tag_dir)
        observed = {i: load_degraded(ds_dir, i, p) for i in test_ids}
        if method == "nsadm":
            maps = {i: load_maps(ds_dir, i, p) for i in test_ids}
            conds = [ConditioningBundle.from_measurement(maps[i], observed[i],
                                                         cfg.run.d_max)
                     for i in test_ids]
            starts = [_infer_start_step(cfg, sched, c, maps[i])
                      for i, c in zip(test_ids, conds)]
            seeds = [_sampler_seed(cfg, i, _power_key(p)) for i in test_ids]
            preds = batched_reverse_sample(net, conds, sched, seeds,
                                           start_steps=starts)
        elif method == "mt":
            preds = [mt_enhance(observed[i]) for i in test_ids]
        else:
            preds = [passthrough(observed[i]) for i in test_ids]
        for i, pred in zip(test_ids, preds):
            base = os.path.join(tag_dir, scene_name(i))
            save_grid(base + ".dm", pred.values, pred.valid, "dm")
            pointcloud_to_ply(dm_to_pointcloud(pred, grid), base + ".ply")

    if jobs > 1 and method != "nsadm":
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(run_power, powers))
    else:
        for p in powers:
            run_power(p)
    return out_root


# ---------------------------------------------------------------------------
# evaluation


def _scan_predictions(pred_root):
    """Yield (method, power_dbm, scene_index, dm_path), sorted."""
    found = []
    if not os.path.isdir(pred_root):
        raise FileNotFoundError(
            f"no predictions directory at {pred_root}; run 'infer' first")
    for method in sorted(os.listdir(pred_root)):
        mdir = os.path.join(pred_root, method)
        if not os.path.isdir(mdir):
            continue
        for tag in sorted(os.listdir(mdir)):
            tdir = os.path.join(mdir, tag)
            if not os.path.isdir(tdir):
                continue
            p = parse_power_tag(tag)
            for fn in sorted(os.listdir(tdir)):
                if fn.endswith(".dm"):
                    idx = int(fn[len("scene_"):-len(".dm")])
                    found.append((method, p, idx, os.path.join(tdir, fn)))
    return found


def cmd_evaluate(cfg: ExperimentConfig, dataset_dir=None, predictions_dir=None):
    """Score predictions against ground truth; returns (csv path, summary path)."""
    ds_dir = dataset_dir or os.path.join(cfg.run.out_dir, "dataset")
    _require_dataset(ds_dir)
    pred_root = predictions_dir or os.path.join(cfg.run.out_dir, "predictions")
    grid = cfg.grid.make_grid()
    entries = sorted(_scan_predictions(pred_root))
    if not entries:
        raise FileNotFoundError(f"no prediction grids under {pred_root}")

    gts = {}
    rows = []
    scores = {}
    for method, p, idx, path in entries:
        if idx not in gts:
            gts[idx] = load_gt(ds_dir, idx)
        values, valid, _ = load_grid(path)
        pred = DistanceMatrix(values, valid)
        m = evaluate_pair(pred, gts[idx], grid)
        rows.append((scene_name(idx), method, _float_cell(p),
                     _float_cell(m["rmse_m"]), _float_cell(m["chamfer_m2"]),
                     _float_cell(m["coverage"])))
        scores.setdefault(method, {}).setdefault(p, []).append(m)

    csv_path = os.path.join(cfg.run.out_dir, "metrics.csv")
    _write_csv(csv_path, ("scene_id", "method", "power", "rmse_m", "chamfer_m2",
                          "coverage"), rows)

    means = {}
    for method, by_power in scores.items():
        means[method] = {}
        for p, ms in by_power.items():
            means[method][f"{p:g}"] = {
                "rmse_m": float(np.mean([m["rmse_m"] for m in ms])),
                "chamfer_m2": float(np.mean([m["chamfer_m2"] for m in ms])),
                "coverage": float(np.mean([m["coverage"] for m in ms])),
                "n_scenes": len(ms),
            }

    powers = sorted({p for _, p, _, _ in entries})
    power_axis = {"powers_dbm": powers, "per_method": {}}
    for method, by_power in scores.items():
        shared = [p for p in powers if p in by_power]
        rmse_seq = [float(np.mean([m["rmse_m"] for m in by_power[p]])) for p in shared]
        cd_seq = [float(np.mean([m["chamfer_m2"] for m in by_power[p]])) for p in shared]
        power_axis["per_method"][method] = {
            "rmse_nonincreasing_with_power": _nonincreasing(rmse_seq),
            "chamfer_nonincreasing_with_power": _nonincreasing(cd_seq),
        }
    if "nsadm" in scores and any(m in scores for m in ("mt", "passthrough")):
        beats = {}
        for p in powers:
            ok = True
            for rival in ("mt", "passthrough"):
                if rival not in scores or p not in scores[rival] or p not in scores["nsadm"]:
                    continue
                for key in ("rmse_m", "chamfer_m2"):
                    ours = np.mean([m[key] for m in scores["nsadm"][p]])
                    theirs = np.mean([m[key] for m in scores[rival][p]])
                    ok = ok and (ours < theirs)
            beats[f"{p:g}"] = bool(ok)
        power_axis["nsadm_strictly_better_at_power"] = beats
        power_axis["nsadm_strictly_better_everywhere"] = all(beats.values())

    axes = {"power": power_axis}
    sweep_summary_path = os.path.join(cfg.run.out_dir, "sweep", "sweep_summary.json")
    if os.path.isfile(sweep_summary_path):
        sweep_summary = read_json(sweep_summary_path)
        axes["detection_ratio"] = sweep_summary["axes"]["detection_ratio"]
        axes["variance_scale"] = sweep_summary["axes"]["variance_scale"]
    else:
        axes["detection_ratio"] = "not_run"
        axes["variance_scale"] = "not_run"

    summary = {"mean": means, "axes": axes,
               "methods": sorted(scores), "n_rows": len(rows)}
    summary_path = os.path.join(cfg.run.out_dir, "summary.json")
    write_json(summary_path, summary)
    return csv_path, summary_path


# ---------------------------------------------------------------------------
# correlation sweeps (detection ratio and variance scale)


def _sweep_maps(base: StatMaps, detection_ratio=None, variance_scale=None) -> StatMaps:
    """Synthetic degradation statistics for one sweep point.

    Detection sweep: constant detection probability on valid beams, noise
    untouched. Variance sweep: noise variance scaled, detection untouched.
    """
    detp = base.detp
    var = base.var
    if detection_ratio is not None:
        detp = np.where(base.valid, float(detection_ratio), base.detp)
    if variance_scale is not None:
        var = base.var * float(variance_scale)
    return StatMaps(base.snr, var, detp, base.valid)


def cmd_sweep(cfg: ExperimentConfig, dataset_dir=None, checkpoint=None,
              jobs: int = 1) -> str:
    """Degradation-axis sweeps on a test-scene subset; returns the sweep dir.

    Both axes perturb the top-power measurement statistics: the detection
    sweep varies the keep probability at fixed noise, the variance sweep
    scales the noise at fixed detection. The per-scene degradation stream is
    the same one the dataset used, so all sweep points see nested masks and
    proportionally scaled noise fields.
    """
    ds_dir = dataset_dir or os.path.join(cfg.run.out_dir, "dataset")
    manifest = _require_dataset(ds_dir)
    test_ids = split_indices(manifest, "test")[:cfg.sweep.scene_limit]
    if not test_ids:
        raise ConfigError("no test scenes available for the sweep")
    grid = cfg.grid.make_grid()
    top_power = max(cfg.sweep.power_dbm)
    sweep_dir = os.path.join(cfg.run.out_dir, "sweep")
    ensure_dir(sweep_dir)

    prefix = checkpoint or os.path.join(cfg.run.out_dir, "checkpoint")
    if not os.path.isfile(prefix + ".json"):
        raise FileNotFoundError(f"no checkpoint at {prefix}.json; run 'train' first")
    net, sched, _, _ = load_checkpoint(prefix)

    base = {i: (load_gt(ds_dir, i), load_maps(ds_dir, i, top_power))
            for i in test_ids}

    axis_points = [("detection_ratio", float(r), _DETECTION_KEY_OFFSET + ri)
                   for ri, r in enumerate(cfg.sweep.detection_ratios)]
    axis_points += [("variance_scale", float(s), _VARIANCE_KEY_OFFSET + si)
                    for si, s in enumerate(cfg.sweep.variance_scales)]

    rows = []
    scores = {}
    for axis, value, point_key in axis_points:
        point_dir = os.path.join(sweep_dir, f"{axis}_{value:g}".replace(".", "_"))
        ensure_dir(point_dir)
        conds = []
        point_maps = []
        observed = {}
        for i in test_ids:
            gt, maps_top = base[i]
            maps = _sweep_maps(maps_top,
                               detection_ratio=value if axis == "detection_ratio" else None,
                               variance_scale=value if axis == "variance_scale" else None)
            obs = degrade(gt, maps, (TAG_DEGRADE, cfg.run.seed, i))
            observed[i] = obs
            conds.append(ConditioningBundle.from_measurement(maps, obs, cfg.run.d_max))
            point_maps.append(maps)
        preds = {
            "nsadm": batched_reverse_sample(
                net, conds, sched,
                [_sampler_seed(cfg, i, point_key) for i in test_ids],
                start_steps=[_infer_start_step(cfg, sched, c, m)
                             for c, m in zip(conds, point_maps)]),
            "mt": [mt_enhance(observed[i]) for i in test_ids],
            "passthrough": [passthrough(observed[i]) for i in test_ids],
        }
        for method, plist in preds.items():
            for i, pred in zip(test_ids, plist):
                if method == "nsadm":
                    save_grid(os.path.join(point_dir, scene_name(i) + ".dm"),
                              pred.values, pred.valid, "dm")
                m = evaluate_pair(pred, base[i][0], grid)
                rows.append((axis, _float_cell(value), scene_name(i), method,
                             _float_cell(m["rmse_m"]), _float_cell(m["chamfer_m2"]),
                             _float_cell(m["coverage"])))
                scores.setdefault((axis, method), {}).setdefault(value, []).append(m)

    _write_csv(os.path.join(sweep_dir, "sweep_metrics.csv"),
               ("axis", "point", "scene_id", "method", "rmse_m", "chamfer_m2",
                "coverage"), rows)

    axes_summary = {}
    for axis, expected in (("detection_ratio", "nonincreasing"),
                           ("variance_scale", "nondecreasing")):
        check = _nonincreasing if expected == "nonincreasing" else _nondecreasing
        points = (cfg.sweep.detection_ratios if axis == "detection_ratio"
                  else cfg.sweep.variance_scales)
        per_method = {}
        for method in METHODS:
            by_point = scores.get((axis, method), {})
            if not by_point:
                continue
            rmse_seq = [float(np.mean([m["rmse_m"] for m in by_point[v]]))
                        for v in points]
            cd_seq = [float(np.mean([m["chamfer_m2"] for m in by_point[v]]))
                      for v in points]
            per_method[method] = {
                "points": [float(v) for v in points],
                "rmse_mean": rmse_seq,
                "chamfer_mean": cd_seq,
                f"rmse_{expected}": check(rmse_seq),
                f"chamfer_{expected}": check(cd_seq),
            }
        axes_summary[axis] = {
            "expected_trend": expected,
            "per_method": per_method,
            "nsadm_trend_holds": bool(
                per_method.get("nsadm", {}).get(f"rmse_{expected}", False)
                and per_method.get("nsadm", {}).get(f"chamfer_{expected}", False)),
        }

    summary = {"axes": axes_summary, "scene_ids": [scene_name(i) for i in test_ids],
               "reference_power_dbm": float(top_power)}
    write_json(os.path.join(sweep_dir, "sweep_summary.json"), summary)
    return sweep_dir


# ---------------------------------------------------------------------------
# statistical self-validation


def cmd_validate_stats(cfg: ExperimentConfig, trials: int = 10_000) -> str:
    """Monte Carlo check of the estimator statistics; returns the report path.

    Raises ValidationFailure (after writing the report) if any empirical
    quantity leaves its admission band.
    """
    if trials < 100:
        raise ConfigError(
            f"insufficient samples: statistical validation needs at least 100 "
            f"trials, got {trials}")
    out_dir = os.path.join(cfg.run.out_dir, "validation")
    ensure_dir(out_dir)
    pcfg = PulseConfig()
    lam = cfg.sensing.detection_threshold
    det_gammas = [0.0, lam, 10.0 * lam]
    det = validate_detection(det_gammas, pcfg, cfg.sensing.p_fa,
                             n_trials=trials, seed=cfg.run.seed)
    crb_gammas = [1e2, 1e3, 1e4]
    crb = validate_crb(crb_gammas, pcfg, cfg.sensing, n_trials=trials,
                       seed=cfg.run.seed)

    rows = []
    for entry in crb["per_gamma"]:
        rows.append((_float_cell(entry["gamma"]), _float_cell(entry["crb_rms_m2"]),
                     _float_cell(entry["var_empirical_m2"]),
                     _float_cell(entry["ratio_rms"]), "", ""))
    for entry in det["rates"]:
        rows.append((_float_cell(entry["gamma"]), "", "", "",
                     _float_cell(entry["predicted"]),
                     _float_cell(entry["empirical"])))
    _write_csv(os.path.join(out_dir, "stats.csv"),
               ("snr", "crb", "empirical_var", "ratio", "detp_pred", "detp_emp"),
               rows)

    det_ok = all(r["within_4_sigma"] for r in det["rates"])
    crb_ok = (all(e["in_band"] for e in crb["per_gamma"])
              and crb["inverse_gamma_scaling_within_20pct"])
    report = {
        "n_trials": trials,
        "detection": det,
        "detection_ok": det_ok,
        "crb": crb,
        "crb_ok": crb_ok,
        "passed": bool(det_ok and crb_ok),
    }
    report_path = os.path.join(out_dir, "report.json")
    write_json(report_path, report)
    if not report["passed"]:
        bad = []
        if not det_ok:
            bad.append("detection rates outside the 4-sigma band")
        if not crb_ok:
            bad.append("range-error variance outside the estimation-bound band")
        raise ValidationFailure("; ".join(bad) + f" (see {report_path})")
    return report_path
