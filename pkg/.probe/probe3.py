import numpy as np, time
from triview import dataio, training
from triview.model import Model
from triview.training import Adam, _slice_views, _cast_views, evaluate
from triview.objectives import augment_batch, total_loss
from triview import views as vm

spec = dataio.xor_preset(seed=11)
_, tgt = dataio.generate_synthetic(spec)

def probe(lr, batch, lam, views, epochs=30, tag="", stop_at=None):
    cfg = training.TrainConfig(stage="finetune", batch_size=batch, max_epochs=1,
                               learning_rate=lr, lam=lam, views=views,
                               length=64, hidden=32, num_layers=2, num_heads=2, seed=0)
    prep = training.prepare_dataset(tgt, cfg)
    model = Model.build(cfg.model_config(1, 2), seed=0)
    train, val, test = prep["train"], prep["val"], prep["test"]
    opt = Adam(model.trainable(), lr=lr, weight_decay=cfg.weight_decay)
    policy = cfg.policy()
    n = len(train)
    t0 = time.time(); accs = []
    for epoch in range(epochs):
        order = dataio.seeded_rng(0, 0xF17E, epoch).permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start+batch]
            if idx.size < 2: continue
            vb = _slice_views(train.views, idx)
            if lam > 0:
                xa = augment_batch(train.x[idx], policy, 0, epoch, idx)
                va = _cast_views(vm.extract_views(xa, dt=1.0))
                z, za, logits = model.forward_pair(vb, va)
            else:
                z, logits = model.forward(vb); za = None
            loss, rep = total_loss(z, za, logits, train.labels[idx], lam=lam, tau=0.07, views=views)
            opt.zero_grad(); loss.backward(); opt.step()
        acc = evaluate(model, val).accuracy
        accs.append(round(acc, 3))
        if stop_at and acc > stop_at: break
    tacc = evaluate(model, test).accuracy
    print(f"{tag} lr={lr} b={batch} lam={lam} views={views}: {time.time()-t0:.0f}s "
          f"test={tacc:.3f} val={accs}", flush=True)

probe(3e-3, 32, 0.0, ("t","d","f"), tag="fused-lam0", stop_at=0.97)
probe(3e-3, 32, 0.1, ("t",), tag="t-only")
probe(3e-3, 32, 0.1, ("d",), tag="d-only")
probe(3e-3, 32, 0.1, ("f",), tag="f-only")
