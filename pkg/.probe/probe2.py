import numpy as np, time, sys
from triview import dataio, training
from triview.model import Model

spec = dataio.xor_preset(seed=11)
_, tgt = dataio.generate_synthetic(spec)

def probe(lr, batch, epochs=30, lam=0.1, preset=None, tag=""):
    data = tgt if preset is None else dataio.generate_synthetic(preset)[1]
    cfg = training.TrainConfig(stage="finetune", batch_size=batch, max_epochs=1,
                               learning_rate=lr, lam=lam,
                               length=64, hidden=32, num_layers=2, num_heads=2,
                               early_stop_patience=50, plateau_patience=50, seed=0)
    prep = training.prepare_dataset(data, cfg)
    model = Model.build(cfg.model_config(1, 2), seed=0)
    # manual loop printing val acc per epoch
    from triview.training import Adam, _slice_views, _cast_views, evaluate
    from triview.objectives import augment_batch, total_loss
    from triview import views as vm
    train = prep["train"]; val = prep["val"]; test = prep["test"]
    opt = Adam(model.trainable(), lr=lr, weight_decay=cfg.weight_decay)
    policy = cfg.policy()
    n = len(train)
    t0 = time.time()
    accs = []
    for epoch in range(epochs):
        order = dataio.seeded_rng(0, 0xF17E, epoch).permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start+batch]
            if idx.size < 2: continue
            vb = _slice_views(train.views, idx)
            xa = augment_batch(train.x[idx], policy, 0, epoch, idx)
            va = _cast_views(vm.extract_views(xa, dt=1.0))
            z, za, logits = model.forward_pair(vb, va)
            loss, rep = total_loss(z, za, logits, train.labels[idx], lam=lam, tau=0.07)
            opt.zero_grad(); loss.backward(); opt.step()
        acc = evaluate(model, val).accuracy
        accs.append(round(acc, 3))
        if acc > 0.97: break
    dt = time.time() - t0
    tacc = evaluate(model, test).accuracy
    print(f"{tag} lr={lr} batch={batch} lam={lam}: {dt:.0f}s test={tacc:.3f} val_траj={accs}", flush=True)

probe(1e-2, 128, tag="A")
probe(5e-3, 64, tag="B")
probe(3e-3, 32, tag="C")
