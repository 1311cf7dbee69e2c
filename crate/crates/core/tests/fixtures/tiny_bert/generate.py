"""Regenerates the tiny BERT fixture used by the ONNX backend tests.

Writes encoder.onnx, classifier.onnx, vocab.txt, labels.json, head.json and
expected.json (reference token ids, pooled vectors and logits computed by
PyTorch and the reference WordPiece tokenizer from `transformers`).

    python3 generate.py
"""

import json
import os

import numpy as np
import torch
from transformers import BertConfig, BertModel, BertTokenizer

HERE = os.path.dirname(os.path.abspath(__file__))

WORDS = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "the", "committee", "inflation", "growth", "employment", "prices",
    "rose", "fell", "labor", "market", "economic", "activity", "expanded",
    "moderate", "pace", "participants", "noted", "that", "was", "were",
    "in", "of", "and", "a", "to", "un", "##employ", "##ment", "rate",
    "declined", "gdp", "strong", "weak", "energy", "consumer", "spending",
    ".", ",", "##s", "##ed", "##ing", "percent", "2", "##5", "q",
]

SENTENCES = [
    "inflation",
    "growth",
    "employment",
    "unemployment",
    "qzxv",
    "The Committee noted that inflation rose.",
    "Labor market conditions were strong, and unemployment declined.",
    "Economic activity expanded at a moderate pace in Q2.",
    "Energy prices fell and consumer spending was weak.",
]


class Encoder(torch.nn.Module):
    def __init__(self, bert):
        super().__init__()
        self.bert = bert

    def forward(self, input_ids, attention_mask):
        out = self.bert(
            input_ids=input_ids,
            attention_mask=attention_mask,
            output_hidden_states=True,
        )
        hs = out.hidden_states
        return hs[-4], hs[-3], hs[-2], hs[-1]


class Classifier(torch.nn.Module):
    def __init__(self, bert, head):
        super().__init__()
        self.bert = bert
        self.head = head

    def forward(self, input_ids, attention_mask):
        out = self.bert(input_ids=input_ids, attention_mask=attention_mask)
        return self.head(out.last_hidden_state[:, 0, :])


def main():
    torch.manual_seed(20211)
    vocab_path = os.path.join(HERE, "vocab.txt")
    with open(vocab_path, "w") as f:
        f.write("\n".join(WORDS) + "\n")

    cfg = BertConfig(
        vocab_size=len(WORDS),
        hidden_size=16,
        num_hidden_layers=4,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=64,
        hidden_dropout_prob=0.0,
        attention_probs_dropout_prob=0.0,
    )
    bert = BertModel(cfg, add_pooling_layer=False, attn_implementation="eager").eval()
    head = torch.nn.Linear(16, 3)
    encoder = Encoder(bert).eval()
    classifier = Classifier(bert, head).eval()

    ids = torch.tensor([[2, 7, 3]])
    mask = torch.ones_like(ids)
    dyn = {"input_ids": {0: "batch", 1: "seq"}, "attention_mask": {0: "batch", 1: "seq"}}
    torch.onnx.export(
        encoder, (ids, mask), os.path.join(HERE, "encoder.onnx"),
        input_names=["input_ids", "attention_mask"],
        output_names=["hidden_1", "hidden_2", "hidden_3", "hidden_4"],
        dynamic_axes={**dyn, **{f"hidden_{i}": {0: "batch", 1: "seq"} for i in range(1, 5)}},
        opset_version=14, dynamo=False,
    )
    torch.onnx.export(
        classifier, (ids, mask), os.path.join(HERE, "classifier.onnx"),
        input_names=["input_ids", "attention_mask"],
        output_names=["logits"],
        dynamic_axes={**dyn, "logits": {0: "batch"}},
        opset_version=14, dynamo=False,
    )

    with open(os.path.join(HERE, "labels.json"), "w") as f:
        json.dump({"labels": ["positive", "negative", "neutral"]}, f)
    with open(os.path.join(HERE, "head.json"), "w") as f:
        json.dump({
            "weight": head.weight.detach().double().tolist(),
            "bias": head.bias.detach().double().tolist(),
        }, f)

    tok = BertTokenizer(vocab_path, do_lower_case=True)
    cases = []
    for s in SENTENCES:
        enc = tok(s)
        ids = torch.tensor([enc["input_ids"]])
        mask = torch.ones_like(ids)
        with torch.no_grad():
            layers = encoder(ids, mask)
            logits = classifier(ids, mask)
        stacked = torch.stack(layers).double()[:, 0]  # [4, seq, d]
        word = stacked.mean(0)                        # [seq, d]
        cases.append({
            "text": s,
            "token_ids": enc["input_ids"],
            "word_embeddings": word.tolist(),
            "sentence_embedding": word[1:-1].mean(0).tolist(),
            "cls_state": stacked[-1, 0].tolist(),
            "logits": logits[0].double().tolist(),
        })
    with open(os.path.join(HERE, "expected.json"), "w") as f:
        json.dump(cases, f, indent=1)


if __name__ == "__main__":
    main()
