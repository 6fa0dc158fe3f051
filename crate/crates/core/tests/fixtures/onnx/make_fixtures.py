"""Writes the tiny ONNX models used by tests/onnx_ports.rs.

Every output is a closed-form function of the input so the Rust test can
check it exactly. Run from this directory: python make_fixtures.py
"""
import hashlib
import json

import torch
from torch import nn


class Detector(nn.Module):
    # Eight candidates, rows cx cy w h s0 s1, channels first. The second
    # box's class-1 score is the mean page intensity; the last six score 0.
    def forward(self, x):
        m = x.mean()
        first = torch.tensor([320.0, 200.0, 300.0, 40.0, 0.9, 0.1])
        second = torch.stack([torch.tensor(100.0), torch.tensor(400.0), torch.tensor(80.0),
                              torch.tensor(60.0), torch.tensor(0.0), m])
        rest = torch.zeros(6, 6) + torch.tensor([[50.0], [50.0], [10.0], [10.0], [0.0], [0.0]])
        return torch.cat([torch.stack([first, second], dim=1), rest], dim=1).unsqueeze(0)


class Recognizer(nn.Module):
    # One timestep per 4 columns; dark steps score symbol 1, light steps blank.
    def __init__(self):
        super().__init__()
        self.head = nn.Conv2d(1, 3, 1)
        with torch.no_grad():
            self.head.weight.copy_(torch.tensor([4.0, -4.0, 0.0]).view(3, 1, 1, 1))
            self.head.bias.copy_(torch.tensor([-2.0, 2.0, -5.0]))

    def forward(self, x):
        v = nn.functional.avg_pool2d(x, (32, 4))
        return self.head(v).squeeze(2).permute(2, 0, 1)


class Backbone(nn.Module):
    # Hidden state of token i is row ids[i] of table[r][d] = r + d / 10,
    # zeroed where the mask is 0.
    def __init__(self):
        super().__init__()
        r = torch.arange(64, dtype=torch.float32).unsqueeze(1)
        d = torch.arange(8, dtype=torch.float32).unsqueeze(0)
        self.table = nn.Parameter(r + d / 10.0, requires_grad=False)

    def forward(self, input_ids, attention_mask):
        return self.table[input_ids] * attention_mask.unsqueeze(-1).float()


def export(model, args, name, inputs, outputs, dynamic=None):
    path = f"{name}.onnx"
    torch.onnx.export(model, args, path, input_names=[i["name"] for i in inputs],
                      output_names=[o["name"] for o in outputs], dynamic_axes=dynamic,
                      opset_version=13, dynamo=False)
    digest = hashlib.sha256(open(path, "rb").read()).hexdigest()
    manifest = {"kind": "onnx", "source": "tiny fixture", "target": path, "sha256": digest,
                "inputs": inputs, "outputs": outputs}
    with open(f"{name}.json", "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


export(Detector(), (torch.zeros(1, 3, 640, 640),), "detector",
       [{"name": "images", "shape": [1, 3, 640, 640]}], [{"name": "output0", "shape": [1, 6, 8]}])
export(Recognizer(), (torch.zeros(1, 1, 32, 24),), "recognizer",
       [{"name": "crop", "shape": [1, 1, 32, -1]}], [{"name": "logits", "shape": [-1, 1, 3]}],
       dynamic={"crop": {3: "width"}, "logits": {0: "steps"}})
ids = torch.zeros(1, 75, dtype=torch.int64)
export(Backbone(), (ids, torch.ones(1, 75, dtype=torch.int64)), "backbone",
       [{"name": "input_ids", "shape": [1, 75]}, {"name": "attention_mask", "shape": [1, 75]}],
       [{"name": "last_hidden_state", "shape": [1, 75, 8]}])
