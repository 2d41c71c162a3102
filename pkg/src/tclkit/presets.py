"""Named architecture presets.

Desk-scale variants of the AlexNet- and VGG-style classifier heads: the
convolutional stems are reduced to fit 32x32 inputs on one core, but
they end on exactly the activation shapes the built-in result tables
assume ((256,3,3), (512,3,3), (256,5,5)/(256,6,6)), so the
fully-connected-block accounting is unaffected by the reduction.

Naming: `<family>-<variant>[-<channel rank>]`, e.g.
`alexnet-cifar-sub1-256` replaces the first hidden layer with a
size-(256,3,3) contraction. The imagenet-head presets carry a `-55` or
`-66` suffix selecting the activation reading.
"""

from __future__ import annotations

from .network import (
    ConfigError,
    NetworkConfig,
    classifier,
    conv,
    fc,
    flatten,
    maxpool,
    relu,
    tcl,
)


def _alexnet_cifar_stem():
    # (3,32,32) -> (256,3,3)
    return [conv(96, 5, 2, 2), relu(), maxpool(2),
            conv(256, 3, 1, 1), relu(),
            conv(256, 3, 1, 0), relu(), maxpool(2)]


def _vgg_cifar_stem():
    # (3,32,32) -> (512,3,3)
    return [conv(128, 3, 2, 1), relu(), maxpool(2),
            conv(256, 3, 1, 1), relu(),
            conv(512, 3, 1, 0), relu(), maxpool(2)]


def _imagenet_stem_55():
    # (3,32,32) -> (256,5,5)
    return [conv(96, 5, 2, 2), relu(),
            conv(256, 3, 1, 0), relu(), maxpool(2),
            conv(256, 3, 1, 0), relu()]


def _imagenet_stem_66():
    # (3,32,32) -> (256,6,6)
    return [conv(96, 5, 2, 2), relu(), maxpool(2),
            conv(256, 3, 1, 0), relu()]


def _synth_stem():
    # (3,8,8) -> (8,4,4)
    return [conv(8, 3, 1, 1), relu(), maxpool(2)]


def _fc_tail(hidden, classes):
    return [flatten(), fc(hidden), relu(), fc(hidden), relu(), classifier(classes)]


def _added_tail(ranks, hidden, classes):
    return [tcl(*ranks), flatten(),
            fc(hidden), relu(), fc(hidden), relu(), classifier(classes)]


def _sub1_tail(ranks, hidden, classes):
    return [tcl(*ranks), flatten(), fc(hidden), relu(), classifier(classes)]


def _sub2_tail(ranks1, ranks2, classes):
    return [tcl(*ranks1), tcl(*ranks2), flatten(), classifier(classes)]


def _family(prefix, stem, spatial, channels, classes, hidden_for, sub2_pairs):
    """Baseline + added/sub1 per channel rank + sub2 pairs."""
    builders = {}
    s = (spatial, spatial)

    builders[f"{prefix}-baseline"] = lambda: NetworkConfig(
        f"{prefix}-baseline", (3, 32, 32), stem() + _fc_tail(4096, classes),
        variant="baseline")

    for ch in channels:
        h = hidden_for[ch]
        builders[f"{prefix}-added-{ch}"] = (
            lambda ch=ch, h=h: NetworkConfig(
                f"{prefix}-added-{ch}", (3, 32, 32),
                stem() + _added_tail((ch, *s), h, classes), variant="added-tcl"))
        builders[f"{prefix}-sub1-{ch}"] = (
            lambda ch=ch, h=h: NetworkConfig(
                f"{prefix}-sub1-{ch}", (3, 32, 32),
                stem() + _sub1_tail((ch, *s), h, classes), variant="substitute-1"))

    for ch1, ch2 in sub2_pairs:
        builders[f"{prefix}-sub2-{ch1}"] = (
            lambda ch1=ch1, ch2=ch2: NetworkConfig(
                f"{prefix}-sub2-{ch1}", (3, 32, 32),
                stem() + _sub2_tail((ch1, *s), (ch2, *s), classes),
                variant="substitute-2"))

    return builders


_BUILDERS = {}
_BUILDERS.update(_family(
    "alexnet-cifar", _alexnet_cifar_stem, 3, (256, 192, 128), 100,
    {256: 4096, 192: 3072, 128: 2048}, [(256, 256), (192, 144)]))
_BUILDERS.update(_family(
    "vgg-cifar", _vgg_cifar_stem, 3, (512, 384, 256), 100,
    {512: 4096, 384: 3072, 256: 2048}, [(512, 512), (384, 288)]))

for _suffix, _stem, _hw in (("55", _imagenet_stem_55, 5),
                            ("66", _imagenet_stem_66, 6)):
    _s = (_hw, _hw)
    _BUILDERS[f"alexnet-imagenet-baseline-{_suffix}"] = (
        lambda stem=_stem: NetworkConfig(
            "alexnet-imagenet-baseline", (3, 32, 32),
            stem() + _fc_tail(4096, 1000), variant="baseline"))
    _BUILDERS[f"alexnet-imagenet-added-256-{_suffix}"] = (
        lambda stem=_stem, s=_s: NetworkConfig(
            "alexnet-imagenet-added-256", (3, 32, 32),
            stem() + _added_tail((256, *s), 4096, 1000), variant="added-tcl"))
    _BUILDERS[f"alexnet-imagenet-added-200-{_suffix}"] = (
        lambda stem=_stem, s=_s: NetworkConfig(
            "alexnet-imagenet-added-200", (3, 32, 32),
            stem() + _added_tail((200, *s), 3276, 1000), variant="added-tcl"))
    _BUILDERS[f"alexnet-imagenet-sub1-256-{_suffix}"] = (
        lambda stem=_stem, s=_s: NetworkConfig(
            "alexnet-imagenet-sub1-256", (3, 32, 32),
            stem() + _sub1_tail((256, *s), 4096, 1000), variant="substitute-1"))

_BUILDERS["synth-conv-fc"] = lambda: NetworkConfig(
    "synth-conv-fc", (3, 8, 8),
    _synth_stem() + [flatten(), fc(128), relu(), classifier(3)],
    variant="baseline")
_BUILDERS["synth-conv-tcl"] = lambda: NetworkConfig(
    "synth-conv-tcl", (3, 8, 8),
    _synth_stem() + [tcl(8, 4, 4), flatten(), classifier(3)],
    variant="substitute-1")


def _baseline_name(name: str):
    for prefix in ("alexnet-cifar", "vgg-cifar"):
        if name.startswith(prefix):
            return f"{prefix}-baseline"
    if name.startswith("alexnet-imagenet"):
        return f"alexnet-imagenet-baseline-{name.rsplit('-', 1)[1]}"
    if name.startswith("synth-conv"):
        return "synth-conv-fc"
    return None


def preset_names() -> list:
    return sorted(_BUILDERS)


def get_preset(name: str) -> NetworkConfig:
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; choices: {', '.join(preset_names())}"
        ) from None
    return builder()


def baseline_for(name: str) -> str:
    """Name of the preset a preset's space savings are measured against."""
    if name not in _BUILDERS:
        raise ConfigError(f"unknown preset {name!r}")
    base = _baseline_name(name)
    return base if base is not None else name
