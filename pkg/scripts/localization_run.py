"""Occlusion pointing game on held-out synthetic class-1 images.

Trains the small CNN on one synthetic set, then scores occlusion maps of a
second, independently seeded set against the true lesion boxes.

    python3 scripts/localization_run.py --n 50
"""
import argparse
import time

from cardiomix.explain import OcclusionConfig, gradcam, occlusion_map, pointing_game
from cardiomix.imgcore import SyntheticSpec, generate_synthetic
from cardiomix.model import ModelSpec, TrainConfig, train
from cardiomix.preprocess import PreprocessConfig, preprocess_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=50, help="held-out class-1 images")
    ap.add_argument("--epochs", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    t0 = time.perf_counter()
    pcfg = PreprocessConfig()
    train_ds = preprocess_dataset(generate_synthetic(SyntheticSpec(seed=1)), pcfg)
    held = preprocess_dataset(generate_synthetic(SyntheticSpec(per_class=args.n, seed=2)), pcfg)
    params, _ = train(train_ds, ModelSpec(arch="smallcnn"), TrainConfig(epochs=args.epochs, seed=args.seed))
    t1 = time.perf_counter()
    positives = [ex for ex in held.examples if ex.class_index == 1]
    occ = sum(pointing_game(occlusion_map(params, ex.image, OcclusionConfig()), ex.lesion_box)
              for ex in positives)
    t2 = time.perf_counter()
    cam = sum(pointing_game(gradcam(params, ex.image), ex.lesion_box) for ex in positives)
    n = len(positives)
    print(f"occlusion pointing game: {occ}/{n} = {occ / n:.3f}  ({t2 - t1:.1f} s)")
    print(f"grad-cam pointing game:  {cam}/{n} = {cam / n:.3f}")
    print(f"training: {t1 - t0:.1f} s")


if __name__ == "__main__":
    main()
