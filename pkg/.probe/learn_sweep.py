import numpy as np, time, json, sys
from triview import dataio, training
from triview.model import Model

spec = dataio.xor_preset(seed=11)
_, tgt = dataio.generate_synthetic(spec)

results = {}
for lr in (1e-3, 3e-3):
    for lam in (0.1, 0.0):
        cfg = training.TrainConfig(stage="finetune", batch_size=128, max_epochs=25,
                                   learning_rate=lr, lam=lam,
                                   length=64, hidden=32, num_layers=2, num_heads=2,
                                   early_stop_patience=25, plateau_patience=8, seed=0)
        model = Model.build(cfg.model_config(1, 2), seed=0)
        prep = training.prepare_dataset(tgt, cfg)
        accs = []
        t0 = time.time()
        res, metrics = training.finetune(model, tgt, cfg)
        # report val-CE trajectory + final test acc
        traj = [round(h.val_loss, 4) for h in res.history]
        print(f"lr={lr} lam={lam}: {time.time()-t0:.0f}s test_acc={metrics.accuracy:.3f} "
              f"f1={metrics.macro_f1:.3f} best_epoch={res.best_epoch}", flush=True)
        print("  val CE:", traj, flush=True)
