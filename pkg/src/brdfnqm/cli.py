"""Command-line pipeline: synthesize, sample, label, train, score, compare.

All randomness flows from explicit --seed flags; any command rerun with
identical inputs and seeds writes byte-identical outputs. Exit codes:
0 success, 1 runtime/data error, 2 usage error.
"""

from __future__ import annotations

import pathlib
import sys

import click
import numpy as np

from . import baselines, evaluate, jod, nn, preprocess, sampling, synth
from .errors import BrdfError
from .merl import CANONICAL_RES, load_merl, save_merl
from .pairio import read_pair, write_samples
from .tables import read_table, write_table

MANIFEST_COLUMNS = ["ref_path", "dist_path", "severity", "seed", "kind", "magnitude", "material"]
PAIRS_COLUMNS = ["pair_id", "material", "severity", "ref_samples", "dist_samples"]
LABEL_COLUMNS = ["pair_id", "jod", "provenance"]
SPLIT_COLUMNS = ["pair_id", "split"]
HISTORY_COLUMNS = ["epoch", "train_loss", "val_loss", "lr_input", "lr_deep"]


def _fail(exc: Exception):
    raise click.ClickException(str(exc))


@click.group()
def main():
    """Perceptual quality toolkit for tabulated BRDFs."""


def _parse_level(text: str) -> synth.DistortionSpec:
    try:
        kind_s, _, mag_s = text.partition(":")
        kind = synth.DistortionKind(kind_s)
        return synth.DistortionSpec(kind=kind, magnitude=float(mag_s))
    except (ValueError, KeyError) as exc:
        raise click.UsageError(f"bad level spec {text!r} (want kind:magnitude, e.g. noise:0.01)") from exc


@main.command("gen-synthetic")
@click.option("--n", type=int, required=True, help="Number of reference materials.")
@click.option("--level", "levels", multiple=True, required=True, help="Distortion level kind:magnitude; repeatable.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--res", nargs=3, type=int, default=CANONICAL_RES, show_default=True, help="Table resolution (theta_h theta_d phi_d).")
def cmd_gen_synthetic(n, levels, seed, out_dir, res):
    """Generate analytic reference/distorted table pairs plus a manifest."""
    if n < 1:
        raise click.UsageError("--n must be >= 1")
    specs = [_parse_level(t) for t in levels]
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    try:
        current_ref = None
        for i, (ref, dist, severity) in enumerate(synth.iter_dataset(n, specs, seed, res=tuple(res))):
            li = i % len(specs)
            if li == 0:
                current_ref = out / f"{ref.name}.binary"
                save_merl(ref, current_ref)
            dist_path = out / f"{ref.name}_l{li:02d}.binary"
            save_merl(dist, dist_path)
            lv = specs[li]
            rows.append([str(current_ref), str(dist_path), float(severity), seed, lv.kind.value, float(lv.magnitude), ref.name])
        write_table(out / "manifest.txt", "manifest", MANIFEST_COLUMNS, rows, meta={"seed": seed, "n": n})
    except (BrdfError, OSError) as exc:
        _fail(exc)
    click.echo(f"wrote {len(rows)} pairs to {out}/manifest.txt")


@main.command("sample")
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--k", type=int, default=sampling.DEFAULT_K, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--grid", nargs=3, type=int, default=sampling.DEFAULT_GRID, show_default=True)
@click.option("--out-dir", type=click.Path(), required=True)
def cmd_sample(manifest, k, seed, grid, out_dir):
    """Sample every manifest pair at directions chosen from its reference."""
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        _, _, rows = read_table(manifest, "manifest")
        cands = sampling.build_candidate_grid(*grid)
        pair_rows = []
        dirsets: dict[str, tuple] = {}
        counters: dict[str, int] = {}
        for r in rows:
            ref_path, dist_path, severity, _, _, _, material = r
            if ref_path not in dirsets:
                ref_brdf = load_merl(ref_path, strict_resolution=False)
                ds = sampling.select_samples(ref_brdf, cands, k=k, seed=seed)
                ref_sampled = sampling.sample_brdf(ref_brdf, ds)
                ref_out = out / f"{material}_ref.txt"
                write_samples(ref_out, ref_sampled)
                dirsets[ref_path] = (ds, str(ref_out))
            ds, ref_out = dirsets[ref_path]
            li = counters.get(material, 0)
            counters[material] = li + 1
            pair_id = f"{material}_l{li:02d}"
            dist_brdf = load_merl(dist_path, strict_resolution=False)
            dist_sampled = sampling.sample_brdf(dist_brdf, ds)
            dist_out = out / f"{pair_id}_dist.txt"
            write_samples(dist_out, dist_sampled)
            pair_rows.append([pair_id, material, float(severity), ref_out, str(dist_out)])
        write_table(out / "pairs.txt", "pairs", PAIRS_COLUMNS, pair_rows, meta={"k": k, "seed": seed})
    except (BrdfError, OSError) as exc:
        _fail(exc)
    click.echo(f"sampled {len(pair_rows)} pairs into {out}")


@main.command("fit-jod")
@click.option("--calibration", type=click.Path(exists=True), required=True, help="Table with deitp/jod columns.")
@click.option("--init", nargs=3, type=float, default=(jod.REFERENCE_PARAMS.b1, jod.REFERENCE_PARAMS.b2, jod.REFERENCE_PARAMS.b3), show_default=True)
@click.option("--out", type=click.Path(), required=True)
def cmd_fit_jod(calibration, init, out):
    """Fit the logistic deitp->JOD regression by Levenberg-Marquardt."""
    try:
        _, cols, rows = read_table(calibration, "calibration")
        points = [
            jod.CalibrationPoint(deitp=float(r[cols.index("deitp")]), jod=float(r[cols.index("jod")]))
            for r in rows
        ]
    except (BrdfError, OSError) as exc:
        _fail(exc)
    if len(points) < 3:
        raise click.UsageError("calibration needs at least 3 rows")
    try:
        params = jod.fit_jod_regression(points, jod.JodRegressionParams(*init))
        write_table(out, "jodparams", ["b1", "b2", "b3"], [[params.b1, params.b2, params.b3]])
    except (BrdfError, OSError, ValueError) as exc:
        _fail(exc)
    click.echo(f"fitted b1={params.b1:.4f} b2={params.b2:.4f} b3={params.b3:.4f}")


def _load_params(path) -> jod.JodRegressionParams:
    _, cols, rows = read_table(path, "jodparams")
    r = rows[0]
    return jod.JodRegressionParams(*(float(r[cols.index(k)]) for k in ("b1", "b2", "b3")))


@main.command("label")
@click.option("--deitp", "deitp_file", type=click.Path(exists=True), help="Table with pair_id/deitp columns.")
@click.option("--params", "params_file", type=click.Path(exists=True), help="Fitted regression parameters.")
@click.option("--from-severity", "pairs_file", type=click.Path(exists=True), help="Pairs index: label via the synthetic severity oracle instead.")
@click.option("--out", type=click.Path(), required=True)
def cmd_label(deitp_file, params_file, pairs_file, out):
    """Assign JOD labels from deitp values or the synthetic severity oracle."""
    if bool(deitp_file) == bool(pairs_file):
        raise click.UsageError("give either --deitp (with --params) or --from-severity")
    rows = []
    try:
        if pairs_file:
            _, cols, prows = read_table(pairs_file, "pairs")
            for r in prows:
                sev = float(r[cols.index("severity")])
                rows.append([r[cols.index("pair_id")], preprocess.severity_oracle_jod(sev), preprocess.Provenance.SYNTHETIC_ORACLE.value])
        else:
            params = _load_params(params_file) if params_file else jod.REFERENCE_PARAMS
            _, cols, drows = read_table(deitp_file, "deitp")
            labelled = jod.label_dataset(
                [(r[cols.index("pair_id")], float(r[cols.index("deitp")])) for r in drows], params
            )
            rows = [[pid, value, preprocess.Provenance.PSEUDO_DEITP.value] for pid, value in labelled]
        write_table(out, "labels", LABEL_COLUMNS, rows)
    except (BrdfError, OSError, ValueError) as exc:
        _fail(exc)
    click.echo(f"labelled {len(rows)} pairs")


@main.command("split")
@click.option("--pairs", "pairs_file", type=click.Path(exists=True), required=True)
@click.option("--test-material", "test_materials", multiple=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def cmd_split(pairs_file, test_materials, seed, out):
    """Hold out test materials and split the rest 80/20 by pair."""
    try:
        _, cols, prows = read_table(pairs_file, "pairs")
        ids = [r[cols.index("pair_id")] for r in prows]
        mats = [r[cols.index("material")] for r in prows]
        test_set = set(test_materials)
        test_idx = [i for i, m in enumerate(mats) if m in test_set]
        rest = [i for i, m in enumerate(mats) if m not in test_set]
        perm = np.random.default_rng(seed).permutation(len(rest))
        n_train = round(0.8 * len(rest))
        assign = {}
        for j in perm[:n_train]:
            assign[rest[j]] = "train"
        for j in perm[n_train:]:
            assign[rest[j]] = "val"
        for i in test_idx:
            assign[i] = "test"
        rows = [[ids[i], assign[i]] for i in range(len(ids))]
        write_table(out, "splits", SPLIT_COLUMNS, rows, meta={"seed": seed})
    except (BrdfError, OSError) as exc:
        _fail(exc)
    counts = {s: sum(1 for r in rows if r[1] == s) for s in ("train", "val", "test")}
    click.echo(f"split {counts['train']}/{counts['val']}/{counts['test']}")


@main.command("augment")
@click.option("--pairs", "pairs_file", type=click.Path(exists=True), required=True)
@click.option("--labels", "labels_file", type=click.Path(exists=True), required=True)
@click.option("--splits", "splits_file", type=click.Path(exists=True), required=True)
@click.option("--lo", type=float, default=0.95, show_default=True)
@click.option("--hi", type=float, default=1.05, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(), required=True)
def cmd_augment(pairs_file, labels_file, splits_file, lo, hi, seed, out_dir):
    """Double the training set by random-scale augmentation of each pair."""
    if lo > hi:
        raise click.UsageError("--lo must be <= --hi")
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        pairs_meta, pcols, prows = read_table(pairs_file, "pairs")
        _, lcols, lrows = read_table(labels_file, "labels")
        _, scols, srows = read_table(splits_file, "splits")
        labels = {r[lcols.index("pair_id")]: r for r in lrows}
        split_of = {r[scols.index("pair_id")]: r[scols.index("split")] for r in srows}
        new_pairs, new_labels, new_splits = list(prows), list(lrows), list(srows)
        for i, r in enumerate(prows):
            pid = r[pcols.index("pair_id")]
            if split_of.get(pid) != "train":
                continue
            ref, dist = read_pair(r[pcols.index("ref_samples")], r[pcols.index("dist_samples")])
            src = preprocess.LabeledPair(
                ref=ref, dist=dist, jod=float(labels[pid][lcols.index("jod")]),
                provenance=preprocess.Provenance(labels[pid][lcols.index("provenance")]),
                material=r[pcols.index("material")],
            )
            aug = preprocess.augment_scale(src, lo=lo, hi=hi, seed=hash((seed, i)) & 0x7FFFFFFF)
            aug_id = f"{pid}_s"
            ref_path = out / f"{aug_id}_ref.txt"
            dist_path = out / f"{aug_id}_dist.txt"
            write_samples(ref_path, aug.ref)
            write_samples(dist_path, aug.dist)
            new_pairs.append([aug_id, aug.material, r[pcols.index("severity")], str(ref_path), str(dist_path)])
            new_labels.append([aug_id, aug.jod, aug.provenance.value])
            new_splits.append([aug_id, "train"])
        write_table(out / "pairs.txt", "pairs", PAIRS_COLUMNS, new_pairs, meta=pairs_meta)
        write_table(out / "labels.txt", "labels", LABEL_COLUMNS, new_labels)
        write_table(out / "splits.txt", "splits", SPLIT_COLUMNS, new_splits, meta={"seed": seed})
    except (BrdfError, OSError, KeyError) as exc:
        _fail(exc)
    click.echo(f"training pairs: {len(prows)} rows -> {len(new_pairs)} rows total")


def _load_dataset(pairs_file, labels_file, splits_file):
    _, pcols, prows = read_table(pairs_file, "pairs")
    _, lcols, lrows = read_table(labels_file, "labels")
    _, scols, srows = read_table(splits_file, "splits")
    labels = {r[lcols.index("pair_id")]: float(r[lcols.index("jod")]) for r in lrows}
    split_of = {r[scols.index("pair_id")]: r[scols.index("split")] for r in srows}
    dataset = {"train": [], "val": [], "test": []}
    for r in prows:
        pid = r[pcols.index("pair_id")]
        split = split_of[pid]
        ref, dist = read_pair(r[pcols.index("ref_samples")], r[pcols.index("dist_samples")])
        dataset[split].append(
            {"pair_id": pid, "material": r[pcols.index("material")], "ref": ref, "dist": dist, "jod": labels[pid]}
        )
    return dataset


@main.command("train")
@click.option("--pairs", "pairs_file", type=click.Path(exists=True), required=True)
@click.option("--labels", "labels_file", type=click.Path(exists=True), required=True)
@click.option("--splits", "splits_file", type=click.Path(exists=True), required=True)
@click.option("--epochs", type=int, default=100, show_default=True)
@click.option("--batch-size", type=int, default=512, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--checkpoint", "checkpoint_path", type=click.Path(), required=True)
@click.option("--history", "history_path", type=click.Path(), required=True)
def cmd_train(pairs_file, labels_file, splits_file, epochs, batch_size, seed, checkpoint_path, history_path):
    """Train the quality network on labelled sampled pairs."""
    try:
        dataset = _load_dataset(pairs_file, labels_file, splits_file)
        if not dataset["train"]:
            raise BrdfError("empty training set")
        seen = set()
        train_refs = []
        for item in dataset["train"]:
            if item["material"] not in seen:
                seen.add(item["material"])
                train_refs.append(preprocess.transform_sampled(item["ref"]))
        stats = preprocess.compute_whitening(train_refs, already_transformed=True)
        pool = dataset["train"] + dataset["val"]
        jods = [it["jod"] for it in pool]
        jod_min, jod_max = min(jods), max(jods)
        if jod_min == jod_max:
            jod_min, jod_max = jod_min - 0.5, jod_max + 0.5
        k = dataset["train"][0]["ref"].directions.k
        model = nn.init_model(seed, jod_min, jod_max, stats, input_dim=6 * k)

        def matrix(items):
            if not items:
                return np.zeros((0, 6 * k)), np.zeros((0,))
            x = np.stack([nn.pair_to_input(it["ref"], it["dist"], stats) for it in items])
            y = np.array([it["jod"] for it in items])
            return x, y

        x_tr, y_tr = matrix(dataset["train"])
        x_va, y_va = matrix(dataset["val"])
        cfg = nn.TrainConfig(epochs=epochs, batch_size=batch_size, shuffle_seed=seed)
        model, history = nn.train(model, x_tr, y_tr, x_va, y_va, cfg)
        nn.save_checkpoint(model, checkpoint_path)
        write_table(
            history_path,
            "history",
            HISTORY_COLUMNS,
            [[h["epoch"], h["train_loss"], h["val_loss"], h["lr_input"], h["lr_deep"]] for h in history],
            meta={"params": nn.param_count(model), "seed": seed},
        )
    except (BrdfError, OSError, ValueError, KeyError) as exc:
        _fail(exc)
    click.echo(f"trained {nn.param_count(model)} parameters; checkpoint at {checkpoint_path}")


@main.command("predict")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True), required=True)
@click.option("--pairs", "pairs_file", type=click.Path(exists=True), help="Pairs index to score in batch.")
@click.option("--ref", "ref_file", type=click.Path(exists=True), help="Single reference sample file.")
@click.option("--dist", "dist_file", type=click.Path(exists=True), help="Single distorted sample file.")
@click.option("--out", type=click.Path(), help="Output table (required with --pairs).")
def cmd_predict(checkpoint_path, pairs_file, ref_file, dist_file, out):
    """Predict JOD for sampled pairs with a trained checkpoint."""
    single = bool(ref_file or dist_file)
    if single and not (ref_file and dist_file):
        raise click.UsageError("--ref and --dist must be given together")
    if single == bool(pairs_file):
        raise click.UsageError("give either --pairs or --ref/--dist")
    if pairs_file and not out:
        raise click.UsageError("--out is required with --pairs")
    try:
        model = nn.load_checkpoint(checkpoint_path)
        if single:
            ref, dist = read_pair(ref_file, dist_file)
            click.echo(repr(nn.predict_jod(model, ref, dist)))
            return
        _, pcols, prows = read_table(pairs_file, "pairs")
        rows = []
        for r in prows:
            ref, dist = read_pair(r[pcols.index("ref_samples")], r[pcols.index("dist_samples")])
            rows.append([r[pcols.index("pair_id")], nn.predict_jod(model, ref, dist)])
        write_table(out, "predictions", ["pair_id", "jod_pred"], rows)
    except (BrdfError, OSError) as exc:
        _fail(exc)
    click.echo(f"scored {len(rows)} pairs")


@main.command("eval-baselines")
@click.option("--pairs", "pairs_file", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
def cmd_eval_baselines(pairs_file, out):
    """Compute the eight reference BRDF-space metrics per pair."""
    kinds = list(baselines.MetricKind)
    try:
        _, pcols, prows = read_table(pairs_file, "pairs")
        rows = []
        for r in prows:
            ref, dist = read_pair(r[pcols.index("ref_samples")], r[pcols.index("dist_samples")])
            metrics = baselines.all_metrics(ref, dist)
            rows.append([r[pcols.index("pair_id")], *(metrics[k] for k in kinds)])
        write_table(out, "metrics", ["pair_id", *(k.value for k in kinds)], rows)
    except (BrdfError, OSError) as exc:
        _fail(exc)
    click.echo(f"evaluated {len(rows)} pairs x {len(kinds)} metrics")


@main.command("correlate")
@click.option("--metrics", "metrics_file", type=click.Path(exists=True), required=True)
@click.option("--predictions", "predictions_file", type=click.Path(exists=True))
@click.option("--labels", "labels_file", type=click.Path(exists=True), required=True)
@click.option("--pairs", "pairs_file", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--format", "fmt", type=click.Choice(["table", "plot-data"]), default="table", show_default=True)
def cmd_correlate(metrics_file, predictions_file, labels_file, pairs_file, out, fmt):
    """Per-material Spearman of every metric against JOD labels."""
    try:
        _, pcols, prows = read_table(pairs_file, "pairs")
        material_of = {r[pcols.index("pair_id")]: r[pcols.index("material")] for r in prows}
        _, lcols, lrows = read_table(labels_file, "labels")
        jod_of = {r[lcols.index("pair_id")]: float(r[lcols.index("jod")]) for r in lrows}

        def scored(rows_, cols_, column):
            out_ = []
            for r in rows_:
                pid = r[cols_.index("pair_id")]
                out_.append(
                    evaluate.ScoredPair(
                        pair_id=pid,
                        material=material_of[pid],
                        predicted=float(r[cols_.index(column)]),
                        ground_truth_jod=jod_of[pid],
                    )
                )
            return out_

        report_rows = []
        _, mcols, mrows = read_table(metrics_file, "metrics")
        for kind in baselines.MetricKind:
            rep = evaluate.correlate_per_material(scored(mrows, mcols, kind.value), sign=-1)
            report_rows.append((kind.value, rep.average))
        if predictions_file:
            _, qcols, qrows = read_table(predictions_file, "predictions")
            rep = evaluate.correlate_per_material(scored(qrows, qcols, "jod_pred"), sign=1)
            report_rows.append(("brdf-nqm", rep.average))
        evaluate.emit_report(report_rows, out, fmt=fmt)
    except (BrdfError, OSError, KeyError) as exc:
        _fail(exc)
    click.echo(f"wrote {len(report_rows)} metric rows to {out}")


if __name__ == "__main__":
    sys.exit(main())
