import numpy as np, time
from triview import dataio, training
from triview.model import Model
from triview.training import Adam, _slice_views, _cast_views, evaluate
from triview.objectives import augment_batch, total_loss
from triview import views as vm

spec = dataio.xor_preset(seed=11)
_, tgt = dataio.generate_synthetic(spec)
lr, batch, lam = 3e-3, 32, 0.1
cfg = training.TrainConfig(stage="finetune", batch_size=batch, max_epochs=1,
                           learning_rate=lr, lam=lam,
                           length=64, hidden=32, num_layers=2, num_heads=2, seed=0)
prep = training.prepare_dataset(tgt, cfg)
model = Model.build(cfg.model_config(1, 2), seed=0)
train, val = prep["train"], prep["val"]
opt = Adam(model.trainable(), lr=lr, weight_decay=cfg.weight_decay)
policy = cfg.policy()
n = len(train)
for epoch in range(4):
    t0 = time.time()
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
    tt = time.time() - t0
    acc = evaluate(model, val).accuracy
    print(f"epoch {epoch}: train {tt:.1f}s  (+val {time.time()-t0-tt:.1f}s)", flush=True)
