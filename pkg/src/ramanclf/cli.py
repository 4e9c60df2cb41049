"""``ramanclf`` command line: one subcommand per pipeline step.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Failures print one line to stderr: ``ramanclf: error[<kind>]: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
MODEL_CHOICES = ("FC", "CNN", "FullCNN", "MHCNN", "knn", "dtree", "rforest", "gnb", "svm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return v


def _fraction(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from None
    if not 0 <= v <= 0.5:
        raise argparse.ArgumentTypeError("noise must be a fraction in [0, 0.5]")
    return v


def _levels(text):
    return tuple(_fraction(t) for t in text.split(",") if t.strip())


def _split(text):
    from .core import parse_split

    try:
        return parse_split(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


# -- subcommands ---------------------------------------------------------

def cmd_generate(a):
    from .core import acquisition_grid, write_dataset_csv
    from .spectragen import load_profiles, preset_profiles, scaled_profiles, synth_dataset

    profiles = load_profiles(a.config) if a.config else preset_profiles(a.preset)
    if a.scale != 1.0:
        profiles = scaled_profiles(profiles, a.scale)
    grid = acquisition_grid() if a.grid == "acquisition" else None
    d = synth_dataset(profiles, grid=grid, seed=a.seed)
    write_dataset_csv(d, a.out)
    print(f"wrote {len(d)} spectra x {len(d.grid)} bins to {a.out}")


def cmd_preprocess(a):
    from .core import prepare, read_dataset_csv, write_dataset_csv

    d = read_dataset_csv(a.input)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = prepare(d, despike=not a.no_despike, window=a.window, k=a.k)
    write_dataset_csv(out, a.out)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(f"wrote {len(out)} prepared spectra to {a.out}")


def cmd_augment(a):
    from .core import read_dataset_csv, write_dataset_csv
    from .spectragen import NoiseSpec, augment_dataset

    d = read_dataset_csv(a.input)
    out = augment_dataset(d, NoiseSpec(a.noise), a.shift, np.random.default_rng(a.seed), a.mode)
    write_dataset_csv(out, a.out)
    print(f"wrote {len(out)} spectra to {a.out}")


def cmd_fit_peaks(a):
    from .peakfit import BANDS, PEAK_FIELDS, FitError, fit_peak, noise_sensitivity_study, write_study_csv

    if a.study:
        from .spectragen import load_profiles, preset_profiles

        if a.seed is None:
            raise UsageError("fit-peaks --study requires --seed")
        profiles = load_profiles(a.config) if a.config else preset_profiles(a.preset)
        names = [p.name for p in profiles]
        if a.class_name not in names:
            raise UsageError(f"--class must be one of {names}")
        prof = profiles[names.index(a.class_name)]
        rows = noise_sensitivity_study(prof, a.levels, a.reps, a.seed)
        write_study_csv(rows, a.out)
        print(f"wrote {len(rows)} study rows to {a.out}")
        return
    if a.input is None:
        raise UsageError("fit-peaks needs --in (or --study)")
    from .core import read_dataset_csv

    d = read_dataset_csv(a.input)
    cols = [f"{b}_{f}" for b in BANDS for f in PEAK_FIELDS]
    n_fail = 0
    with open(a.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "label"] + cols + ["error"])
        for i in range(len(d)):
            s = d.spectrum(i)
            vals, errs = [], []
            for band, win in BANDS.items():
                try:
                    _, rep = fit_peak(s, win)
                    vals += [repr(rep.position), repr(rep.fwhm), repr(rep.intensity), repr(rep.area)]
                except (FitError, ValueError) as e:
                    vals += [""] * 4
                    errs.append(f"{band}: {e}")
            n_fail += bool(errs)
            w.writerow([i, d.class_names[d.labels[i]]] + vals + ["; ".join(errs)])
    print(f"fitted {len(d)} spectra ({n_fail} with a failed band) into {a.out}")


def _model_path_kind(path):
    return "nn" if str(path).endswith(".npz") else "ml"


def cmd_train(a):
    from . import mlkit, neural
    from .core import read_dataset_csv, stratified_split

    d = read_dataset_csv(a.input)
    split = stratified_split(d, a.split, a.seed)
    if a.model in mlkit.ML_KINDS:
        if not a.out.endswith(".json"):
            raise UsageError("classical models are saved as .json")
        hp = json.loads(a.hyperparams) if a.hyperparams else {}
        m = mlkit.default_model(a.model, seed=a.seed, **hp)
        m.fit(d.rows[split.train], d.labels[split.train], d.n_classes)
        doc = json.loads(m.to_json())
        doc["class_names"] = list(d.class_names)
        Path(a.out).write_text(json.dumps(doc))
    else:
        if not a.out.endswith(".npz"):
            raise UsageError("neural checkpoints are saved as .npz")
        cfg = neural.TrainConfig.for_model(a.model, epochs=a.epochs, seed=a.seed)
        net, hist = neural.train(a.model, d, split, cfg)
        neural.save_checkpoint(net, a.out, cfg)
        if a.history:
            hist.write_csv(a.history)
            from .plotting import plot_history_png

            plot_history_png(hist, str(Path(a.history).with_suffix(".png")), title=a.model)
    print(f"trained {a.model} on {len(split.train)} spectra; saved {a.out}")


def cmd_evaluate(a):
    from . import mlkit, neural
    from .core import evaluate, read_dataset_csv, stratified_split
    from .spectragen import NoiseSpec, noise_rows

    d = read_dataset_csv(a.input)
    split = stratified_split(d, a.split, a.seed)
    X, y = d.rows[split.test], d.labels[split.test]
    if a.noise > 0:
        X = noise_rows(d.grid, X, NoiseSpec(a.noise), np.random.default_rng([a.seed, 1]))
    if _model_path_kind(a.model_file) == "nn":
        net = neural.load_checkpoint(a.model_file)
        pred, name = net.predict(X), net.spec.name
    else:
        m = mlkit.from_json(Path(a.model_file).read_text())
        pred, name = m.predict(X), m.kind
    rep = evaluate(pred, y, d.n_classes, seed=a.seed, model_name=name, noise_level=a.noise)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    rep.write_json(out / f"report_{name}.json")
    rep.write_confusion_csv(out / f"confusion_{name}.csv", d.class_names)
    from .plotting import plot_confusion_png

    plot_confusion_png(rep.confusion, d.class_names, out / f"confusion_{name}.png",
                       title=f"{name} accuracy {rep.accuracy:.3f}")
    print(f"{name}: accuracy {rep.accuracy:.4f} on {rep.n_test} test spectra")


def _plan(a):
    from .harness import load_plan

    plan = load_plan(a.plan)
    if a.seed is not None:
        plan = plan.replace(master_seed=a.seed)
    return plan


def cmd_sweep(a):
    from .harness import read_sweep_csv, run_confusion, run_noise_sweep
    from .plotting import emit_svg, plot_confusion_png, plot_sweep_png, sweep_series

    plan = _plan(a)
    res = run_noise_sweep(plan)
    out = Path(a.out)
    res.write(out)
    rows = read_sweep_csv(out / "sweep.csv")
    (out / "sweep.svg").write_text(emit_svg(sweep_series(rows), "noise level (%)", "test accuracy"))
    plot_sweep_png(rows, out / "sweep.png")
    for (m, lv, r), msg in sorted(res.errors.items()):
        print(f"warning: run {m} level={lv} rep={r} failed: {msg}", file=sys.stderr)
    if a.confusion:
        from .harness import load_dataset

        d = load_dataset(plan)
        for m in plan.models:
            rep = run_confusion(plan, m, d, out)
            plot_confusion_png(rep.confusion, d.class_names, out / f"confusion_{m}.png", title=m)
    print(f"wrote {len(rows)} sweep rows to {out / 'sweep.csv'}")


def cmd_stability(a):
    from .harness import run_stability_study
    from .plotting import plot_stability_png

    plan = _plan(a)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = run_stability_study(plan)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = Path(a.out)
    res.write(out)
    plot_stability_png(res, out / "stability.png")
    for m in res.models:
        print(f"{m}: histogram {res.histogram(m).tolist()} below 0.8: {res.fraction_below(m):.3f}")


def cmd_pca(a):
    from .core import read_dataset_csv
    from .mlkit import pca_fit, pca_transform
    from .plotting import plot_pca_png

    d = read_dataset_csv(a.input)
    m = pca_fit(d.rows, a.components)
    z = pca_transform(m, d.rows)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "pca_scores.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"PC{i + 1}" for i in range(a.components)] + ["label"])
        for row, lab in zip(z, d.labels):
            w.writerow([repr(float(v)) for v in row] + [d.class_names[lab]])
    with open(out / "pca_variance.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["component", "explained_variance_ratio"])
        for i, r in enumerate(m.explained_variance_ratio):
            w.writerow([i + 1, repr(float(r))])
    if a.components >= 2:
        plot_pca_png(z, d.labels, d.class_names, m.explained_variance_ratio, out / "pca.png")
    ratios = ", ".join(f"{r:.4f}" for r in m.explained_variance_ratio)
    print(f"explained variance ratios: {ratios}")


def cmd_plot(a):
    from .harness import read_sweep_csv
    from .plotting import emit_svg, plot_sweep_png, sweep_series

    rows = read_sweep_csv(a.input)
    if not rows:
        raise ValueError(f"{a.input}: no sweep rows")
    if a.out.endswith(".png"):
        plot_sweep_png(rows, a.out)
    else:
        Path(a.out).write_text(emit_svg(sweep_series(rows), a.xlabel, a.ylabel, a.title))
    print(f"wrote {a.out}")


# -- parser --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ramanclf", description="Graphene Raman spectra classification pipeline.")
    p.add_argument("--version", action="version", version=f"ramanclf {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.set_defaults(func=fn)
        return sp

    def src(sp, required=True):
        g = sp.add_mutually_exclusive_group(required=required)
        g.add_argument("--preset", choices=("charge_mimic", "dielectric_mimic"), help="built-in class profiles")
        g.add_argument("--config", help="JSON file with class profiles")

    sp = add("generate", cmd_generate, "Synthesize a labelled spectra CSV from class profiles.")
    src(sp)
    sp.add_argument("--seed", type=_seed, required=True, help="generator seed")
    sp.add_argument("--scale", type=float, default=1.0, help="multiply per-class counts (default 1)")
    sp.add_argument("--grid", choices=("standard", "acquisition"), default="standard",
                    help="standard 728-bin window or the wider acquisition axis")
    sp.add_argument("--out", required=True, help="output CSV")

    sp = add("preprocess", cmd_preprocess, "Despike, resample to the standard grid and rescale to [0, 1].")
    sp.add_argument("--in", dest="input", required=True, help="input CSV")
    sp.add_argument("--out", required=True, help="output CSV")
    sp.add_argument("--no-despike", action="store_true", help="skip cosmic-ray removal")
    sp.add_argument("--window", type=int, default=7, help="Hampel window (default 7)")
    sp.add_argument("--k", type=float, default=5.0, help="Hampel threshold in scaled MADs (default 5)")

    sp = add("augment", cmd_augment, "Shift and add noise to every spectrum.")
    sp.add_argument("--in", dest="input", required=True, help="input CSV")
    sp.add_argument("--out", required=True, help="output CSV")
    sp.add_argument("--noise", type=_fraction, default=0.05, help="noise level fraction (default 0.05)")
    sp.add_argument("--shift", type=float, default=30.0, help="max shift in cm^-1 (default 30)")
    sp.add_argument("--augment-mode", dest="mode", choices=("replace", "append"), default="replace",
                    help="replace rows or append augmented copies (default replace)")
    sp.add_argument("--seed", type=_seed, required=True, help="augmentation seed")

    sp = add("fit-peaks", cmd_fit_peaks, "Fit pseudo-Voigt G and 2D bands, or run the noise sensitivity study.")
    sp.add_argument("--in", dest="input", help="input CSV (per-spectrum fitting)")
    sp.add_argument("--out", required=True, help="output CSV")
    sp.add_argument("--study", action="store_true", help="run the noise sensitivity study instead")
    src(sp, required=False)
    sp.add_argument("--class", dest="class_name", default="Gr/OTMS1", help="profile to study")
    sp.add_argument("--levels", type=_levels, default=(0.01, 0.05, 0.10), help="comma-separated noise fractions")
    sp.add_argument("--reps", type=int, default=100, help="noisy copies per level (default 100)")
    sp.add_argument("--seed", type=_seed, help="study seed (required with --study)")

    sp = add("train", cmd_train, "Train one model on the train part of a stratified split.")
    sp.add_argument("--in", dest="input", required=True, help="prepared dataset CSV")
    sp.add_argument("--model", choices=MODEL_CHOICES, required=True, help="model name")
    sp.add_argument("--split", type=_split, default=(0.8, 0.2), help="80/20 or 60/20/20 (default 80/20)")
    sp.add_argument("--epochs", type=int, default=100, help="epochs for neural models (default 100)")
    sp.add_argument("--hyperparams", help="JSON object of classical-model hyperparameters")
    sp.add_argument("--history", help="CSV path for the per-epoch history (neural models)")
    sp.add_argument("--seed", type=_seed, required=True, help="split and initialization seed")
    sp.add_argument("--out", required=True, help="model file (.npz neural, .json classical)")

    sp = add("evaluate", cmd_evaluate, "Evaluate a saved model on the test part of the same split.")
    sp.add_argument("--in", dest="input", required=True, help="prepared dataset CSV")
    sp.add_argument("--model-file", required=True, help="file written by train")
    sp.add_argument("--split", type=_split, default=(0.8, 0.2), help="split used in training")
    sp.add_argument("--noise", type=_fraction, default=0.0, help="noise added to test spectra")
    sp.add_argument("--seed", type=_seed, required=True, help="seed used in training")
    sp.add_argument("--out", required=True, help="output directory")

    for name, fn, help_ in (("sweep", cmd_sweep, "Run a noise sweep from a JSON plan."),
                            ("stability", cmd_stability, "Run a stability study from a JSON plan.")):
        sp = add(name, fn, help_)
        sp.add_argument("--plan", required=True, help="experiment plan JSON")
        sp.add_argument("--seed", type=_seed, help="override the plan's master seed")
        sp.add_argument("--out", required=True, help="output directory")
        if name == "sweep":
            sp.add_argument("--confusion", action="store_true", help="also emit per-model confusion matrices")

    sp = add("pca", cmd_pca, "Principal component scores and explained variance.")
    sp.add_argument("--in", dest="input", required=True, help="dataset CSV")
    sp.add_argument("--components", type=int, default=2, help="number of components (default 2)")
    sp.add_argument("--out", required=True, help="output directory")

    sp = add("plot", cmd_plot, "Render sweep.csv as an SVG (or PNG) accuracy-vs-noise chart.")
    sp.add_argument("--in", dest="input", required=True, help="sweep.csv")
    sp.add_argument("--out", required=True, help="output .svg or .png")
    sp.add_argument("--xlabel", default="noise level (%)", help="x axis label")
    sp.add_argument("--ylabel", default="test accuracy", help="y axis label")
    sp.add_argument("--title", default="", help="chart title")
    return p


def _fail(kind, code, msg):
    msg = " ".join(str(msg).split())
    print(f"ramanclf: error[{kind}]: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    from .core import DataError
    from .harness import HarnessError
    from .neural import ShapeError, TrainingDiverged
    from .peakfit import FitError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except UsageError as e:
        return _fail("usage", EXIT_USAGE, e)
    except (FitError, TrainingDiverged, HarnessError, ArithmeticError, np.linalg.LinAlgError) as e:
        return _fail("numeric", EXIT_NUMERIC, e)
    except (DataError, ShapeError, OSError, KeyError, ValueError) as e:
        return _fail("data", EXIT_DATA, e)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
