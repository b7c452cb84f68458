import time, numpy as np
from triview import dataio, training

def main():
    t0 = time.time()
    spec = dataio.xor_preset(f_lo=12.0, f_hi=15.0, noise_std=1.0, amp_jitter=0.3,
                             freq_jitter=1, seed=11)
    _, target = dataio.generate_synthetic(spec)
    base = training.TrainConfig(
        stage="finetune", batch_size=32, max_epochs=14, learning_rate=3e-3, lam=0.1,
        length=64, hidden=32, num_layers=2, num_heads=2,
        early_stop_patience=5, plateau_patience=14, seed=0,
    )
    grid = {"views": [("t", "d", "f"), ("t",), ("d",), ("f",)]}
    rows, aggs = training.run_ablation_grid(base, grid, target, seeds=[0, 1, 2, 3, 4], workers=2)
    wall = time.time() - t0
    for agg in aggs:
        print(f"views={'+'.join(agg['views']):6s} acc={agg['accuracy_mean']:.3f}±{agg['accuracy_std']:.3f} "
              f"f1={agg['macro_f1_mean']:.3f}", flush=True)
    for r in rows:
        print(f"  seed {r['seed']} views={'+'.join(r['views']):6s} acc={r['accuracy']:.3f}")
    print(f"WALL: {wall:.0f}s")

if __name__ == "__main__":
    main()
