#!/usr/bin/env python3
"""Regenerates the bundled architecture descriptions under data/arch/.

ResNet50 (torchvision v1.5 layout: stride on the 3x3 conv of each bottleneck)
and DeepLabv3+ on a ResNet50 backbone at output stride 16 (layer4 dilated,
ASPP rates 6/12/18 plus image pooling, decoder with a 48-channel low-level
projection and two 3x3 convs).
"""
import json
import pathlib
import sys


class Builder:
    def __init__(self, name):
        self.name = name
        self.layers = []

    def add(self, **layer):
        self.layers.append(layer)
        return layer["name"]

    def conv_bn(self, name, src, out_ch, kernel, stride=1, dilation=1, group="backbone", relu=True, padding=None):
        spec = dict(name=name, kind="conv2d", input=src, out_ch=out_ch, kernel=kernel,
                    stride=stride, dilation=dilation, group=group)
        if padding is not None:
            spec["padding"] = padding
        t = self.add(**spec)
        t = self.add(name=name + ".bn", kind="batchnorm", input=t, group=group)
        if relu:
            t = self.add(name=name + ".relu", kind="relu", input=t, group=group)
        return t

    def bottleneck(self, name, src, width, stride, dilation, downsample):
        t = self.conv_bn(name + ".conv1", src, width, 1)
        t = self.conv_bn(name + ".conv2", t, width, 3, stride=stride, dilation=dilation)
        t = self.conv_bn(name + ".conv3", t, width * 4, 1, relu=False)
        skip = src
        if downsample:
            skip = self.conv_bn(name + ".downsample", src, width * 4, 1, stride=stride, relu=False)
        t = self.add(name=name + ".add", kind="add", inputs=[t, skip])
        return self.add(name=name + ".relu", kind="relu", input=t)

    def dump(self):
        return {"name": self.name, "input": {"name": "input", "channels": 3}, "layers": self.layers}


def resnet50_trunk(b, output_stride=32):
    t = b.conv_bn("conv1", "input", 64, 7, stride=2, padding=3)
    t = b.add(name="maxpool", kind="maxpool", input=t, kernel=3, stride=2, padding=1)
    stages = [("layer1", 64, 3, 1), ("layer2", 128, 4, 2), ("layer3", 256, 6, 2), ("layer4", 512, 3, 2)]
    outputs = {}
    dilation = 1
    current_stride = 4
    for name, width, blocks, stride in stages:
        block_dilation = dilation
        if current_stride >= output_stride and stride > 1:
            dilation *= stride
            block_dilation = dilation
            stride = 1
        current_stride *= stride
        for i in range(blocks):
            t = b.bottleneck(f"{name}.{i}", t, width, stride if i == 0 else 1, block_dilation, i == 0)
        outputs[name] = t
    return t, outputs


def resnet50():
    b = Builder("resnet50")
    t, _ = resnet50_trunk(b)
    t = b.add(name="avgpool", kind="global_avgpool", input=t)
    b.add(name="fc", kind="linear", input=t, out_ch=1000, group="classifier")
    return b.dump()


def deeplabv3plus(num_classes=19):
    b = Builder("deeplabv3plus_resnet50_os16")
    t, outs = resnet50_trunk(b, output_stride=16)
    head = "aggregation_head"
    branches = [b.conv_bn("aspp.branch0", t, 256, 1, group=head)]
    for i, rate in enumerate((6, 12, 18), start=1):
        branches.append(b.conv_bn(f"aspp.branch{i}", t, 256, 3, dilation=rate, group=head))
    p = b.add(name="aspp.pool", kind="global_avgpool", input=t, group=head)
    p = b.conv_bn("aspp.pool.conv", p, 256, 1, group=head)
    branches.append(b.add(name="aspp.pool.upsample", kind="bilinear-upsample", input=p, size_of=branches[0], group=head))
    c = b.add(name="aspp.concat", kind="concat", inputs=branches, group=head)
    a = b.conv_bn("aspp.project", c, 256, 1, group=head)

    dec = "decoder"
    low = b.conv_bn("decoder.low_level", outs["layer1"], 48, 1, group=dec)
    up = b.add(name="decoder.upsample", kind="bilinear-upsample", input=a, size_of=low, group=dec)
    c = b.add(name="decoder.concat", kind="concat", inputs=[up, low], group=dec)
    d = b.conv_bn("decoder.conv1", c, 256, 3, group=dec)
    d = b.conv_bn("decoder.conv2", d, 256, 3, group=dec)
    cls = b.add(name="classifier", kind="conv2d", input=d, out_ch=num_classes, kernel=1, group="classifier")
    b.add(name="classifier.upsample", kind="bilinear-upsample", input=cls, size_of="input", group="classifier")
    return b.dump()


def main():
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).resolve().parent.parent / "data" / "arch")
    out.mkdir(parents=True, exist_ok=True)
    for name, arch in (("resnet50.json", resnet50()), ("deeplabv3plus_resnet50_os16.json", deeplabv3plus())):
        with open(out / name, "w") as f:
            json.dump(arch, f, indent=1)
            f.write("\n")


if __name__ == "__main__":
    main()
