"""End-to-end orchestration: baseline runs, forest training, forward UQ,
frozen-stress propagation, and report aggregation.

Every command writes its outputs plus a single ``manifest.json`` into the
output directory; reruns with an identical manifest produce byte-identical
CSVs. Configuration comes from an INI file; command-line flags win over
file values.
"""

from __future__ import annotations

import configparser
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__, channel, dns, forest
from .forest import ForestFormatError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_DATA = 4


class ConfigError(ValueError):
    """Invalid configuration value or missing required setting."""


class DataError(ValueError):
    """Missing or malformed input data."""


# ---------------------------------------------------------------------------
# configuration


DEFAULTS = {
    "channel": {
        "re_tau": "1000",
        "n_cells": "192",
        "stretch": "0.5",
        "max_iters": "40000",
        "residual_tol": "1e-8",
    },
    "train": {
        "train_re_tau": "180, 550, 2000, 5200",
        "holdout_re_tau": "1000",
        "seed": "0",
    },
    "uq": {
        "mode": "datafree",
        "delta_b": "1.0",
    },
    "propagate": {
        "noise": "0.0",
        "noise_seed": "0",
    },
}


@dataclass
class Settings:
    """Fully resolved configuration (file defaults + flag overrides)."""

    channel: dict
    train: dict
    uq: dict
    propagate: dict
    data: dict  # re_tau (as str) -> profile path or "synthetic"

    def as_dict(self):
        return {
            "channel": self.channel,
            "train": self.train,
            "uq": self.uq,
            "propagate": self.propagate,
            "data": self.data,
        }


def load_settings(config_path=None, overrides=None) -> Settings:
    parser = configparser.ConfigParser()
    parser.read_dict(DEFAULTS)
    if config_path is not None:
        if not os.path.exists(config_path):
            raise ConfigError(f"config file not found: {config_path}")
        try:
            parser.read(config_path)
        except configparser.Error as e:
            raise ConfigError(f"malformed config file {config_path}: {e}") from e
    for section, key, value in overrides or []:
        if value is None:
            continue
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, str(value))
    data = dict(parser.items("data")) if parser.has_section("data") else {}
    return Settings(
        channel=dict(parser.items("channel")),
        train=dict(parser.items("train")),
        uq=dict(parser.items("uq")),
        propagate=dict(parser.items("propagate")),
        data=data,
    )


def _get(section: dict, key: str, cast, what: str):
    raw = section.get(key)
    if raw is None:
        raise ConfigError(f"missing setting {what}.{key}")
    try:
        return cast(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid value for {what}.{key}: {raw!r}") from e


def build_channel_config(settings: Settings, re_tau=None) -> channel.ChannelConfig:
    ch = settings.channel
    try:
        return channel.ChannelConfig(
            re_tau=float(re_tau) if re_tau is not None else _get(ch, "re_tau", float, "channel"),
            n_cells=_get(ch, "n_cells", int, "channel"),
            stretch=_get(ch, "stretch", float, "channel"),
            max_iters=_get(ch, "max_iters", int, "channel"),
            residual_tol=_get(ch, "residual_tol", float, "channel"),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _re_tau_list(raw: str):
    try:
        return [float(tok) for tok in raw.replace(",", " ").split()]
    except ValueError as e:
        raise ConfigError(f"invalid Re_tau list: {raw!r}") from e


def load_reference_profile(settings: Settings, re_tau: float) -> dns.DnsProfile:
    """Reference profile for one Re_tau from the [data] section; the
    keyword ``synthetic`` (also the default) builds the bundled
    self-consistent synthetic profile."""
    key = f"{re_tau:g}"
    source = settings.data.get(key, "synthetic")
    if source == "synthetic":
        return dns.synthetic_profile(re_tau)
    if not os.path.exists(source):
        raise DataError(f"reference profile for Re_tau={key} not found: {source}")
    try:
        return dns.load_profile(source, re_tau=re_tau)
    except dns.ProfileParseError as e:
        raise DataError(str(e)) from e


# ---------------------------------------------------------------------------
# manifest plumbing


def write_manifest(out_dir, command, settings: Settings, extra=None) -> None:
    doc = {
        "tool_version": __version__,
        "command": command,
        "settings": settings.as_dict(),
    }
    doc.update(extra or {})
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def read_manifest(run_dir) -> dict:
    path = os.path.join(run_dir, "manifest.json")
    if not os.path.exists(path):
        raise DataError(f"no manifest.json in {run_dir}")
    with open(path) as f:
        return json.load(f)


def _ensure_out(out_dir):
    os.makedirs(out_dir, exist_ok=True)


def _write_rows(path, header, rows):
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_trace_csv(state: channel.ChannelState, path) -> None:
    trace = channel.barycentric_trace(state)
    rows = []
    for yp, pt in zip(state.y_plus, trace):
        if pt is None:
            rows.append([yp] + [np.nan] * 5)
        else:
            rows.append([yp, pt.x, pt.y, *pt.weights])
    _write_rows(path, ["y_plus", "x", "y", "C1", "C2", "C3"], rows)


def count_realizability_violations(state: channel.ChannelState, tol=1e-8) -> int:
    from . import tensors

    return sum(0 if tensors.is_realizable(t, tol=tol) else 1 for t in state.tau)


# ---------------------------------------------------------------------------
# commands


def cmd_baseline(settings: Settings, out_dir) -> int:
    _ensure_out(out_dir)
    cfg = build_channel_config(settings)
    state = channel.solve_baseline(cfg)
    channel.write_solution_csv(state, os.path.join(out_dir, "baseline.csv"))
    write_trace_csv(state, os.path.join(out_dir, "baseline_trace.csv"))
    write_manifest(
        out_dir,
        "baseline",
        settings,
        {
            "iterations": state.iterations,
            "centerline_U": state.centerline_U,
            "total_shear_error": channel.total_shear_error(state),
            "realizability_violations": count_realizability_violations(state),
        },
    )
    return EXIT_OK


def train_forest(settings: Settings, target_kind: str):
    """Train one forest per the dataset config; returns
    (forest, metrics dict)."""
    if target_kind not in dns.TARGET_KINDS:
        raise ConfigError(
            f"unknown target {target_kind!r}; choose from {dns.TARGET_KINDS}"
        )
    train_re = _re_tau_list(settings.train["train_re_tau"])
    holdout_re = _get(settings.train, "holdout_re_tau", float, "train")
    seed = _get(settings.train, "seed", int, "train")
    if not train_re:
        raise ConfigError("train.train_re_tau is empty")

    training = None
    for re_tau in train_re:
        cfg = build_channel_config(settings, re_tau=re_tau)
        state = channel.solve_baseline(cfg)
        profile = dns.interpolate(load_reference_profile(settings, re_tau), state.y_plus)
        part = dns.build_targets(state, profile, target_kind)
        if training is None:
            training = part
        else:
            training.extend(part)

    hp_defaults = {
        "p": forest.HYPERPARAMS_P,
        "pcorr": forest.HYPERPARAMS_PCORR,
        "pcorr_angles": forest.HYPERPARAMS_PCORR_ANGLES,
    }[target_kind]
    hp = forest.ForestHyperparams(
        max_depth=hp_defaults.max_depth,
        min_samples_split=hp_defaults.min_samples_split,
        max_features=hp_defaults.max_features,
        n_trees=hp_defaults.n_trees,
        seed=seed,
    )
    fitted = forest.fit(
        training.X,
        training.Y,
        hp,
        feature_names=training.feature_names,
        target_names=training.target_names,
    )

    cfg = build_channel_config(settings, re_tau=holdout_re)
    held_state = channel.solve_baseline(cfg)
    held_profile = dns.interpolate(
        load_reference_profile(settings, holdout_re), held_state.y_plus
    )
    held = dns.build_targets(held_state, held_profile, target_kind)
    metrics = {
        "target_kind": target_kind,
        "n_train_rows": int(training.X.shape[0]),
        "n_excluded": int(training.n_excluded),
        "train_mse": forest.mse(fitted, training.X, training.Y),
        "holdout_re_tau": holdout_re,
        "holdout_mse": forest.mse(fitted, held.X, held.Y),
        "holdout_mean_predictor_mse": float(
            np.mean((training.Y.mean(axis=0) - held.Y) ** 2)
        ),
        "hyperparams": {
            "max_depth": hp.max_depth,
            "min_samples_split": hp.min_samples_split,
            "max_features": hp.max_features,
            "n_trees": hp.n_trees,
            "seed": hp.seed,
        },
    }
    return fitted, metrics


def cmd_train(settings: Settings, out_dir, target_kind: str) -> int:
    _ensure_out(out_dir)
    fitted, metrics = train_forest(settings, target_kind)
    forest.save(fitted, os.path.join(out_dir, f"forest_{target_kind}.json"))
    _write_rows(
        os.path.join(out_dir, "metrics.csv"),
        [
            "target_kind",
            "n_train_rows",
            "n_excluded",
            "train_mse",
            "holdout_re_tau",
            "holdout_mse",
            "holdout_mean_predictor_mse",
        ],
        [
            [
                metrics["target_kind"],
                metrics["n_train_rows"],
                metrics["n_excluded"],
                metrics["train_mse"],
                metrics["holdout_re_tau"],
                metrics["holdout_mse"],
                metrics["holdout_mean_predictor_mse"],
            ]
        ],
    )
    write_manifest(out_dir, "train", settings, {"metrics": metrics})
    return EXIT_OK


def _load_forest(path):
    if path is None:
        raise ConfigError("data-driven uq mode needs --forest")
    if not os.path.exists(path):
        raise DataError(f"forest file not found: {path}")
    try:
        return forest.load(path)
    except ForestFormatError as e:
        raise DataError(str(e)) from e


def run_uq(settings: Settings, mode: str, forest_path=None):
    cfg = build_channel_config(settings)
    if mode == "datafree":
        delta_b = _get(settings.uq, "delta_b", float, "uq")

        def make_injection(corner):
            return channel.PerturbationInjection(
                mode="datafree", corner=corner, delta_b=delta_b
            )

    elif mode == "p":
        fitted = _load_forest(forest_path)

        def make_injection(corner):
            return channel.PerturbationInjection(mode="p", corner=corner, forest=fitted)

    elif mode in ("pcorr", "pcorr_angles"):
        fitted = _load_forest(forest_path)

        def make_injection(corner):
            # componentwise modes carry no corner: a single forward run;
            # uq_envelope still calls once per corner slot
            return channel.PerturbationInjection(mode=mode, forest=fitted)

    else:
        raise ConfigError(f"unknown uq mode {mode!r}")
    return channel.uq_envelope(cfg, make_injection)


def cmd_uq(settings: Settings, out_dir, mode=None, forest_path=None) -> int:
    _ensure_out(out_dir)
    mode = mode or settings.uq.get("mode", "datafree")
    env = run_uq(settings, mode, forest_path)
    channel.write_solution_csv(env.baseline, os.path.join(out_dir, "baseline.csv"))
    for corner, st in env.corner_states.items():
        channel.write_solution_csv(
            st, os.path.join(out_dir, f"corner_{corner}.csv")
        )
        write_trace_csv(st, os.path.join(out_dir, f"trace_{corner}.csv"))
    _write_rows(
        os.path.join(out_dir, "envelope.csv"),
        ["y_plus", "U_baseline", "U_min", "U_max", "width"],
        [
            [y, ub, lo, hi, hi - lo]
            for y, ub, lo, hi in zip(
                env.baseline.y_plus, env.baseline.U_plus, env.U_min, env.U_max
            )
        ],
    )
    violations = count_realizability_violations(env.baseline) + sum(
        count_realizability_violations(s) for s in env.corner_states.values()
    )
    write_manifest(
        out_dir,
        "uq",
        settings,
        {
            "mode": mode,
            "integrated_width": env.integrated_width(),
            "realizability_violations": violations,
            "iterations": {c: s.iterations for c, s in env.corner_states.items()},
        },
    )
    return EXIT_OK


def cmd_propagate_dns(settings: Settings, out_dir, dns_path=None, noise=None) -> int:
    _ensure_out(out_dir)
    cfg = build_channel_config(settings)
    if noise is None:
        noise = _get(settings.propagate, "noise", float, "propagate")
    seed = _get(settings.propagate, "noise_seed", int, "propagate")
    if dns_path is not None:
        if not os.path.exists(dns_path):
            raise DataError(f"reference profile not found: {dns_path}")
        try:
            profile = dns.load_profile(dns_path, re_tau=cfg.re_tau)
        except dns.ProfileParseError as e:
            raise DataError(str(e)) from e
    else:
        profile = load_reference_profile(settings, cfg.re_tau)
    try:
        injection = channel.FrozenStressInjection(
            profile=profile, noise_amplitude=float(noise), noise_seed=seed
        )
        state = channel.solve_with_injection(cfg, injection)
    except ValueError as e:
        raise DataError(str(e)) from e
    ref = dns.interpolate(profile, state.y_plus)
    num = np.linalg.norm(state.U_plus - ref.U_plus)
    den = np.linalg.norm(ref.U_plus)
    rel_l2 = float(num / den) if den > 0 else float("nan")
    channel.write_solution_csv(state, os.path.join(out_dir, "propagated.csv"))
    _write_rows(
        os.path.join(out_dir, "metrics.csv"),
        ["re_tau", "noise", "noise_seed", "rel_l2_error_U", "iterations"],
        [[cfg.re_tau, noise, seed, rel_l2, state.iterations]],
    )
    write_manifest(
        out_dir,
        "propagate-dns",
        settings,
        {
            "noise": float(noise),
            "noise_seed": seed,
            "rel_l2_error_U": rel_l2,
            "iterations": state.iterations,
            "realizability_violations": count_realizability_violations(state),
        },
    )
    return EXIT_OK


def cmd_report(run_dirs, out_dir) -> int:
    """Aggregate one or more completed run directories into summary.csv."""
    _ensure_out(out_dir)
    rows = []
    widths = {}
    for run_dir in run_dirs:
        man = read_manifest(run_dir)
        cmdname = man.get("command", "")
        width = man.get("integrated_width", np.nan)
        if cmdname == "uq":
            widths[man.get("mode", "")] = width
        rows.append(
            [
                os.path.basename(os.path.normpath(run_dir)),
                cmdname,
                man.get("mode", ""),
                man.get("settings", {}).get("channel", {}).get("re_tau", ""),
                width,
                man.get("rel_l2_error_U", np.nan),
                man.get("realizability_violations", np.nan),
                json.dumps(man.get("iterations", ""), sort_keys=True).replace(",", ";"),
            ]
        )
    header = [
        "run",
        "command",
        "mode",
        "re_tau",
        "integrated_width",
        "rel_l2_error_U",
        "realizability_violations",
        "iterations",
    ]
    datafree = widths.get("datafree")
    datadriven = [w for m, w in widths.items() if m != "datafree"]
    if datafree is not None and datadriven:
        header.append("width_ratio_datafree_over_datadriven")
        ratio = datafree / datadriven[0] if datadriven[0] > 0 else np.nan
        rows = [row + [ratio] for row in rows]
    _write_rows(os.path.join(out_dir, "summary.csv"), header, rows)
    write_manifest(
        out_dir,
        "report",
        Settings({}, {}, {}, {}, {}),
        {"runs": [os.path.basename(os.path.normpath(d)) for d in run_dirs]},
    )
    return EXIT_OK
