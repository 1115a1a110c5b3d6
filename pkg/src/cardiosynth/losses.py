"""Training objectives: CE+Dice segmentation loss, KL, hinge adversarial, feature matching."""
from __future__ import annotations

import torch
import torch.nn.functional as F

DICE_EPS = 1e-5


def ce_dice(logits: torch.Tensor, target: torch.Tensor) -> tuple[torch.Tensor, dict]:
    """Cross-entropy plus soft-Dice loss with a component breakdown.

    Loss = mean-CE + (1 - mean foreground soft Dice); the two terms are summed
    unweighted. Soft Dice per class c: (2*sum(p_c*g_c)+eps)/(sum p_c + sum g_c + eps)
    with p = softmax probabilities and g = one-hot target, summed over batch and
    space; the Dice mean runs over foreground classes only (ids 1..C-1).
    """
    b, c, h, w = logits.shape
    if int(target.max()) >= c or int(target.min()) < 0:
        raise ValueError(f"target id out of range for C={c}")
    ce = F.cross_entropy(logits, target)
    probs = F.softmax(logits, dim=1)
    onehot = F.one_hot(target, num_classes=c).permute(0, 3, 1, 2).to(probs.dtype)
    dims = (0, 2, 3)
    inter = (probs * onehot).sum(dim=dims)
    denom = probs.sum(dim=dims) + onehot.sum(dim=dims)
    dice_per_class = (2 * inter + DICE_EPS) / (denom + DICE_EPS)
    dice_term = 1.0 - dice_per_class[1:].mean()
    total = ce + dice_term
    return total, {"ce": ce, "dice": dice_term}


def kl_divergence(mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)), summed over the latent dimension.

    Batched inputs return the mean over the batch of per-vector sums. The
    training loop applies the configured weight; this op does not.
    """
    if mu.shape != logvar.shape:
        raise ValueError(f"mu {tuple(mu.shape)} vs logvar {tuple(logvar.shape)}")
    kl = -0.5 * (1 + logvar - mu.pow(2) - logvar.exp())
    if kl.dim() == 1:
        return kl.sum()
    return kl.sum(dim=-1).mean()


def _as_list(x):
    return x if isinstance(x, (list, tuple)) else [x]


def hinge_d(real_logits, fake_logits) -> torch.Tensor:
    """Discriminator hinge: mean(relu(1 - real)) + mean(relu(1 + fake)), per scale."""
    reals, fakes = _as_list(real_logits), _as_list(fake_logits)
    terms = [F.relu(1.0 - r).mean() + F.relu(1.0 + f).mean()
             for r, f in zip(reals, fakes)]
    return torch.stack(terms).mean()


def hinge_g(fake_logits) -> torch.Tensor:
    """Generator hinge: -mean(fake), averaged over scales."""
    fakes = _as_list(fake_logits)
    return torch.stack([-f.mean() for f in fakes]).mean()


def feature_matching(real_feats, fake_feats, weight: float = 10.0) -> torch.Tensor:
    """Mean absolute difference of discriminator features, layer- and scale-averaged."""
    if len(real_feats) != len(fake_feats):
        raise ValueError("pyramid scale count mismatch")
    scale_terms = []
    for rs, fs in zip(real_feats, fake_feats):
        if len(rs) != len(fs):
            raise ValueError("pyramid layer count mismatch")
        layer_terms = []
        for r, f in zip(rs, fs):
            if r.shape != f.shape:
                raise ValueError(f"feature shape mismatch {tuple(r.shape)} vs {tuple(f.shape)}")
            layer_terms.append((r - f).abs().mean())
        scale_terms.append(torch.stack(layer_terms).mean())
    return weight * torch.stack(scale_terms).mean()
