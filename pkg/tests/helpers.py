"""Shared gradient-check plumbing and small model configurations."""
import numpy as np

from asdfusion.fusion import FusionModel, ModalitySpec, ModelConfig
from asdfusion.numerics import finite_diff_grad, relative_error, softmax_cross_entropy

TOL = 1e-4


def check_layer(layer, x, rng, tol=TOL):
    """Compare backward() with central differences for inputs and every parameter.

    The scalar probed is sum(forward(x) * g) for a fixed random g.
    Returns the worst relative error.
    """
    out = layer.forward(x)
    g = rng.standard_normal(out.shape)
    for p in layer.params():
        p.zero_grad()
    dx = layer.backward(g)
    f = lambda _: float(np.sum(layer.forward(x) * g))
    errs = [relative_error(dx, finite_diff_grad(f, x))]
    for p in layer.params():
        errs.append(relative_error(p.grad, finite_diff_grad(f, p.value)))
    worst = max(errs)
    assert worst <= tol, worst
    return worst


def small_video(kind, name, size=4):
    return ModalitySpec(name, kind, size, input_shape=[8, 16, 16], stem=[1, 2, 2])


def small_model_config(audio="spectrogram", attention=False, projection=False, seed=0, sizes=(4, 3, 5)):
    mods = [small_video("rgb", "rgb", sizes[0]), small_video("flow", "flow", sizes[1])]
    if audio == "spectrogram":
        mods.append(ModalitySpec("audionet", "spectrogram", sizes[2], input_shape=[1, 12, 16], stem=[1, 1, 1]))
    elif audio == "hotvec":
        mods.append(ModalitySpec("pybk", "hotvec", sizes[2], input_dim=8))
    return ModelConfig(mods, attention, projection, head_hidden=6, seed=seed)


def small_inputs(model, n, rng):
    out = {}
    for m in model.config.modalities:
        shape = model.encoders[m.name].prepared_shape
        if m.kind == "hotvec":
            idx = rng.integers(0, 8, size=(n, 16))
            out[m.name] = np.eye(8)[idx]
        else:
            out[m.name] = rng.standard_normal((n,) + shape)
    return out


def check_model(model: FusionModel, inputs, labels, tol=TOL):
    model.zero_grad()
    model.loss_and_grad(inputs, labels)
    f = lambda _: model.loss(inputs, labels)
    worst = 0.0
    for p in model.params():
        worst = max(worst, relative_error(p.grad, finite_diff_grad(f, p.value)))
    assert worst <= tol, worst
    return worst


def head_loss(head, fused, labels):
    return softmax_cross_entropy(head.forward(fused), labels)[0]
