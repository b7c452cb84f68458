import numpy as np, time
from triview import dataio, training
from triview.model import Model
from triview.training import Adam, _slice_views, _cast_views, evaluate
from triview.objectives import augment_batch, total_loss
from triview import views as vm

# harder preset: adjacent-ish bins, jittered amplitude/frequency, more noise
spec = dataio.xor_preset(f_lo=12.0, f_hi=15.0, noise_std=1.0, amp_jitter=0.3,
                         freq_jitter=1, seed=11)
_, tgt = dataio.generate_synthetic(spec)

def probe(views, epochs, tag, stop_at=None, seed=0):
    lr, batch, lam = 5e-3, 32, 0.1
    cfg = training.TrainConfig(stage="finetune", batch_size=batch, max_epochs=1,
                               learning_rate=lr, lam=lam, views=views,
                               length=64, hidden=32, num_layers=2, num_heads=2, seed=seed)
    prep = training.prepare_dataset(tgt, cfg)
    model = Model.build(cfg.model_config(1, 2), seed=seed)
    train, val, test = prep["train"], prep["val"], prep["test"]
    opt = Adam(model.trainable(), lr=lr, weight_decay=cfg.weight_decay)
    policy = cfg.policy()
    n = len(train)
    t0 = time.time(); accs = []
    for epoch in range(epochs):
        order = dataio.seeded_rng(seed, 0xF17E, epoch).permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start+batch]
            if idx.size < 2: continue
            vb = _slice_views(train.views, idx)
            xa = augment_batch(train.x[idx], policy, seed, epoch, idx)
            va = _cast_views(vm.extract_views(xa, dt=1.0))
            z, za, logits = model.forward_pair(vb, va)
            loss, rep = total_loss(z, za, logits, train.labels[idx], lam=lam, tau=0.07, views=views)
            opt.zero_grad(); loss.backward(); opt.step()
        acc = evaluate(model, val).accuracy
        accs.append(round(acc, 3))
        if stop_at and acc > stop_at: break
    tacc = evaluate(model, test).accuracy
    print(f"{tag} seed={seed}: {time.time()-t0:.0f}s test={tacc:.3f} val={accs}", flush=True)

probe(("t","d","f"), 22, "fused", stop_at=0.97)
probe(("t",), 22, "t-only")
probe(("d",), 22, "d-only")
probe(("f",), 22, "f-only")
probe(("t","d","f"), 22, "fused", stop_at=0.97, seed=1)
probe(("t",), 22, "t-only", seed=1)
