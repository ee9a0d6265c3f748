"""Export torchvision's ImageNet VGG16 convolutional trunk for the feature extractor.

Usage: python3 tools/export_vgg16.py vgg16_features.pt
"""

import sys

import torch
import torchvision


def main():
    if len(sys.argv) != 2:
        sys.exit("usage: export_vgg16.py OUT.pt")
    model = torchvision.models.vgg16(weights=torchvision.models.VGG16_Weights.IMAGENET1K_V1)
    # A plain dict: the C++ unpickler cannot rebuild an OrderedDict.
    state = {"features." + k: v.clone() for k, v in model.features.state_dict().items()}
    torch.save(state, sys.argv[1])


if __name__ == "__main__":
    main()
