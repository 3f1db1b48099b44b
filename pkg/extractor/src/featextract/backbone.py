"""ResNet18 feature backbones truncated at a chosen stage.

Stage naming follows the res2/res3/res4 convention: res2 is the stage whose
native output stride is 8 (torchvision ``layer2``), res3 and res4 are the
next two stages (``layer3``/``layer4``).  To keep a 1/8 downsampling factor,
res3 and res4 require the stride modification, which sets the first block's
stride from 2 to 1 in every stage after res2 up to and including the chosen
one.  Channel counts: res2 -> 128, res3 -> 256, res4 -> 512.
"""

from __future__ import annotations

import torch
from torch import nn
from torchvision.models import resnet18

LAYERS = ("res2", "res3", "res4")
LAYER_CHANNELS = {"res2": 128, "res3": 256, "res4": 512}
DOWNSAMPLE_FACTOR = 8


class BackboneError(ValueError):
    pass


def _reset_block_stride(block) -> None:
    block.conv1.stride = (1, 1)
    if block.downsample is not None:
        block.downsample[0].stride = (1, 1)


def build_backbone(
    layer: str, stride_modified: bool, weights: str = "random"
) -> nn.Module:
    """Truncated ResNet18 producing 1/8-resolution feature grids.

    ``weights`` is 'imagenet' (torchvision pretrained), 'random'
    (deterministic seeded init), or a path to a state_dict file.
    """
    if layer not in LAYERS:
        raise BackboneError(f"layer must be one of {LAYERS}, got {layer!r}")
    if layer == "res2" and stride_modified:
        raise BackboneError(
            "res2 is natively at 1/8 resolution; stride modification would "
            "change the downsampling factor to 1/4"
        )
    if layer in ("res3", "res4") and not stride_modified:
        raise BackboneError(
            f"{layer} needs the stride modification to stay at 1/8 resolution"
        )

    if weights == "imagenet":
        try:
            net = resnet18(weights="IMAGENET1K_V1")
        except Exception as exc:
            raise BackboneError(
                f"could not load the pretrained ImageNet checkpoint: {exc}"
            ) from exc
    elif weights == "random":
        torch.manual_seed(0)
        net = resnet18(weights=None)
    else:
        net = resnet18(weights=None)
        try:
            state = torch.load(weights, map_location="cpu", weights_only=True)
        except Exception as exc:
            raise BackboneError(f"could not read weights {weights!r}: {exc}") from exc
        if isinstance(state, dict) and "state_dict" in state:
            state = state["state_dict"]
        state = {k.removeprefix("module."): v for k, v in state.items()}
        missing, unexpected = net.load_state_dict(state, strict=False)
        wanted = _stage_prefixes(layer)
        bad = [k for k in missing if k.startswith(wanted)]
        if bad:
            raise BackboneError(
                f"checkpoint {weights!r} is missing required tensors: {bad[:5]}"
            )

    stages = [net.conv1, net.bn1, net.relu, net.maxpool, net.layer1, net.layer2]
    if layer in ("res3", "res4"):
        _reset_block_stride(net.layer3[0])
        stages.append(net.layer3)
    if layer == "res4":
        _reset_block_stride(net.layer4[0])
        stages.append(net.layer4)
    model = nn.Sequential(*stages)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


def _stage_prefixes(layer: str) -> tuple[str, ...]:
    prefixes = ["conv1", "bn1", "layer1", "layer2"]
    if layer in ("res3", "res4"):
        prefixes.append("layer3")
    if layer == "res4":
        prefixes.append("layer4")
    return tuple(prefixes)
