"""10-fold CV of the small CNN on the synthetic lesion set: plain, CutMix, MixUp.

Prints one report row per run plus wall time. Used to freeze the accuracy
thresholds checked by the acceptance suite.

    python3 scripts/reference_run.py --epochs 8 --out runs/reference
"""
import argparse
import time
from pathlib import Path

from cardiomix.augment import MixParams
from cardiomix.evaluate import run_cv
from cardiomix.imgcore import SyntheticSpec, generate_synthetic
from cardiomix.model import ModelSpec, TrainConfig
from cardiomix.preprocess import PreprocessConfig, preprocess_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--data-seed", type=int, default=1)
    ap.add_argument("--folds", type=int, default=10)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default=None, help="write report/fold CSVs here")
    args = ap.parse_args()

    ds = preprocess_dataset(generate_synthetic(SyntheticSpec(seed=args.data_seed)), PreprocessConfig())
    spec = ModelSpec(arch="smallcnn")
    for method in (None, "cutmix", "mixup"):
        mix = MixParams(method) if method else None
        t0 = time.perf_counter()
        report = run_cv(ds, spec, TrainConfig(epochs=args.epochs, seed=args.seed, mix=mix),
                        k=args.folds, threads=args.threads, name=f"smallcnn+{method or 'plain'}")
        elapsed = time.perf_counter() - t0
        print(report.render_table(), end="")
        print(f"# {elapsed:.1f} s, fold acc {report.values('acc').round(4).tolist()}\n", flush=True)
        if args.out:
            out = Path(args.out) / (method or "plain")
            out.mkdir(parents=True, exist_ok=True)
            (out / "report.txt").write_text(report.render_table())
            (out / "folds.csv").write_text(report.to_csv())
            (out / "roc.csv").write_text(report.roc_csv())


if __name__ == "__main__":
    main()
