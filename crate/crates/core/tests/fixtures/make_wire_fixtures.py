"""Writes chat-completion fixtures and the traces they must decode to."""
import json
import math
import pathlib

HERE = pathlib.Path(__file__).parent


def step(token, p, alts):
    return {
        "token": token,
        "logprob": math.log(p),
        "top_logprobs": [{"token": t, "logprob": math.log(q)} for t, q in alts],
    }


def response(text, steps):
    return {
        "id": "cmpl-fixture",
        "object": "chat.completion",
        "choices": [
            {
                "index": 0,
                "message": {"role": "assistant", "content": text},
                "logprobs": {"content": steps},
                "finish_reason": "stop",
            }
        ],
    }


def expected(steps):
    out = {"steps": [], "chosen_tokens": []}
    for s in steps:
        entries = []
        for alt in s["top_logprobs"]:
            p = math.exp(alt["logprob"])
            hit = next((e for e in entries if e["token"] == alt["token"]), None)
            if hit:
                hit["prob"] += p
            else:
                entries.append({"token": alt["token"], "prob": p})
        if not any(e["token"] == s["token"] for e in entries):
            entries.append({"token": s["token"], "prob": math.exp(s["logprob"])})
        total = 0.0
        for e in entries:
            total += e["prob"]
        out["steps"].append({"entries": entries, "residual_mass": max(0.0, 1.0 - total)})
        out["chosen_tokens"].append(s["token"])
    return out


def write(name, obj):
    (HERE / name).write_text(json.dumps(obj, separators=(",", ":"), ensure_ascii=False) + "\n")


top5 = [
    step("A", 0.6, [("A", 0.6), ("B", 0.2), ("C", 0.1), ("D", 0.05), ("▁E", 0.02)]),
    step("</s>", 0.9, [("</s>", 0.9), ("A", 0.05)]),
]
write("top5.response.json", response("A", top5))
write("top5.trace.json", expected(top5))

unlisted = [step("Z", 0.01, [("A", 0.7), ("B", 0.2), ("A", 0.05)])]
write("unlisted.response.json", response("Z", unlisted))
write("unlisted.trace.json", expected(unlisted))

excess = [step("A", 0.7, [("A", 0.7), ("B", 0.7)])]
write("malformed_mass.response.json", response("A", excess))
positive = response("A", [{"token": "A", "logprob": 0.25, "top_logprobs": []}])
write("malformed_logprob.response.json", positive)
no_lp = response("A", [])
del no_lp["choices"][0]["logprobs"]
write("missing_logprobs.response.json", no_lp)
