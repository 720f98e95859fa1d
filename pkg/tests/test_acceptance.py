"""Acceptance suite: one test per shipped guarantee.

Each test prints a single [PASS]/[FAIL] line (visible with -s or -rP);
the pytest verdict per test is the authoritative signal.
"""
import itertools
import json
import time
from importlib.resources import files

import numpy as np

from srlgnn import tensor as T
from srlgnn.corpus import (
    ContextWindow, LabelSet, Utterance, compute_metrics,
)
from srlgnn.encoder import EncodedSequence, Vocab, build_input
from srlgnn.gradcheck import model_gradcheck, ops_gradcheck
from srlgnn.model import (
    ModelConfig, attention_readout, binary_head, gcn_layer, init_nodes,
)
from srlgnn.pipeline import (
    ExperimentConfig, context_sweep, load_samples, sweep_table, train,
    train_accuracy,
)
from srlgnn.srl_graph import PaGraph, PaNode, SrlFrame, build_graph

FIXTURES = files("srlgnn") / "fixtures"


def report(criterion, ok, detail=""):
    tag = "PASS" if ok else "FAIL"
    print(f"[{tag}] {criterion}" + (f" ({detail})" if detail else ""))
    assert ok, f"{criterion}: {detail}"


def random_frames(rng, token_count, max_frames=5):
    def span():
        s = int(rng.integers(0, token_count))
        e = int(rng.integers(s + 1, token_count + 1))
        return (s, e)

    return [
        SrlFrame(span(), tuple(span() for _ in range(rng.integers(1, 4))))
        for _ in range(rng.integers(0, max_frames + 1))
    ]


def graph_of(spans, edges, token_count=16):
    nodes = tuple(PaNode(i, span, "argument") for i, span in enumerate(spans))
    return PaGraph(nodes, frozenset(frozenset(e) for e in edges), token_count)


def test_criterion_1_graph_builder_matches_brute_force_oracle():
    started = time.monotonic()
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        token_count = int(rng.integers(1, 13))
        frames = random_frames(rng, token_count)
        g = build_graph(frames, token_count)
        ids = {n.span: n.node_id for n in g.nodes}
        expected = set()
        for (sa, ia), (sb, ib) in itertools.combinations(ids.items(), 2):
            in_frame = any(
                (sa == f.predicate and sb in f.arguments)
                or (sb == f.predicate and sa in f.arguments)
                for f in frames
            )
            contained = (
                (sb[0] <= sa[0] and sa[1] <= sb[1])
                or (sa[0] <= sb[0] and sb[1] <= sa[1])
            )
            if in_frame or contained:
                expected.add(frozenset((ia, ib)))
        assert g.edges == expected, f"edge mismatch at seed {seed}"
    elapsed = time.monotonic() - started
    report("criterion 1: graph oracle equivalence (1000 seeds)",
           elapsed < 10.0, f"{elapsed:.1f}s")


def test_criterion_2_layer_equations_match_scalar_loops():
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        n_nodes = int(rng.integers(1, 6))
        d_lm, d_gcn = 8, 4
        # one shared random graph and parameter set per fixture
        spans = sorted({(int(s := rng.integers(0, 6)),
                         int(rng.integers(s + 1, 7))) for _ in range(n_nodes)})
        n_nodes = len(spans)
        edges = {
            (i, j)
            for i in range(n_nodes) for j in range(i + 1, n_nodes)
            if rng.random() < 0.5
        }
        g = graph_of(spans, edges, token_count=6)
        token_rows = rng.standard_normal((10, d_lm))
        target_start = 2
        w_init = rng.standard_normal((d_lm, d_gcn))
        v = rng.standard_normal((d_gcn, d_gcn))
        w_comb = rng.standard_normal((d_gcn, d_gcn))
        w_attn = rng.standard_normal((d_gcn, d_lm))
        cls_vec = rng.standard_normal(d_lm)
        head_w = rng.standard_normal(d_lm + d_gcn)
        head_b = rng.standard_normal()

        enc = EncodedSequence(T.Tensor(token_rows), T.Tensor(token_rows[0]))
        h0 = init_nodes(g, enc, (target_start, 9), T.Tensor(w_init))
        h1 = gcn_layer(h0, g, T.Tensor(v), T.Tensor(w_comb))
        alpha, hg = attention_readout(h1, T.Tensor(cls_vec), T.Tensor(w_attn))
        logit = binary_head(T.Tensor(cls_vec), hg, T.Tensor(head_w),
                            T.Tensor(head_b))

        # scalar-loop reference
        exp_h0 = np.zeros((n_nodes, d_gcn))
        for i, (s, e) in enumerate(spans):
            mean = np.zeros(d_lm)
            for pos in range(s, e):
                mean += token_rows[target_start + pos]
            mean /= e - s
            for j in range(d_gcn):
                acc = 0.0
                for k in range(d_lm):
                    acc += mean[k] * w_init[k, j]
                exp_h0[i, j] = max(acc, 0.0)
        neigh = {i: [] for i in range(n_nodes)}
        for a, b in edges:
            neigh[a].append(b)
            neigh[b].append(a)
        exp_h1 = np.zeros_like(exp_h0)
        for i in range(n_nodes):
            z = np.zeros(d_gcn)
            for j in neigh[i]:
                z += (h0.data[j] @ v) / len(neigh[i])
            exp_h1[i] = np.maximum(h0.data[i] @ w_comb + z, 0.0)
        scores = np.zeros(n_nodes)
        for i in range(n_nodes):
            key = np.maximum(exp_h1[i] @ w_attn, 0.0)
            scores[i] = float(key @ cls_vec)
        shifted = np.exp(scores - scores.max())
        exp_alpha = shifted / shifted.sum()
        exp_hg = np.zeros(d_gcn)
        for i in range(n_nodes):
            exp_hg += exp_alpha[i] * exp_h1[i]
        exp_logit = float(np.concatenate([cls_vec, exp_hg]) @ head_w + head_b)

        worst = max(
            worst,
            float(np.abs(h0.data - exp_h0).max()),
            float(np.abs(h1.data - exp_h1).max()),
            float(np.abs(alpha.data - exp_alpha).max()),
            float(np.abs(hg.data - exp_hg).max()),
            abs(logit.item() - exp_logit),
        )
    report("criterion 2: layer equations vs scalar loops (100 fixtures)",
           worst < 1e-6, f"max abs err {worst:.2e}")


def test_criterion_3_gradient_integrity():
    started = time.monotonic()
    ops = ops_gradcheck(seed=0)
    groups = model_gradcheck(seed=0)
    elapsed = time.monotonic() - started
    worst_ops = max(ops.values())
    worst_model = max(groups.values())
    ok = worst_ops < 1e-6 and worst_model < 1e-4 and elapsed < 60.0
    report("criterion 3: finite-difference gradient check",
           ok, f"ops {worst_ops:.2e}, model {worst_model:.2e}, {elapsed:.1f}s")


def test_criterion_4_attention_contract():
    rng = np.random.default_rng(7)
    ok = True
    detail = ""
    for mode in ("softmax", "literal"):
        for _ in range(50):
            n = int(rng.integers(1, 7))
            h = np.abs(rng.standard_normal((n, 4))) + 0.1
            cls_vec = np.abs(rng.standard_normal(6)) + 0.1
            w = np.abs(rng.standard_normal((4, 6)))
            alpha, hg = attention_readout(
                T.Tensor(h), T.Tensor(cls_vec), T.Tensor(w), mode)
            if abs(alpha.data.sum() - 1.0) > 1e-6:
                ok, detail = False, f"{mode} weights sum {alpha.data.sum()}"
            if n == 1 and abs(alpha.data[0] - 1.0) > 1e-12:
                ok, detail = False, f"single-node weight {alpha.data[0]}"
            perm = rng.permutation(n)
            alpha_p, hg_p = attention_readout(
                T.Tensor(h[perm]), T.Tensor(cls_vec), T.Tensor(w), mode)
            if (np.abs(alpha.data[perm] - alpha_p.data).max() > 1e-6
                    or np.abs(hg.data - hg_p.data).max() > 1e-6):
                ok, detail = False, f"{mode} permutation equivariance"
    report("criterion 4: attention weight contract", ok, detail)


def test_criterion_5_overfits_shipped_sixteen_utterance_fixture():
    cfg = ExperimentConfig(
        train_path=str(FIXTURES / "overfit16.jsonl"),
        srl_path=str(FIXTURES / "overfit16_srl.json"),
        label_set="iemocap4",
        context_n=1, epochs=500, batch_size=4, lr=1e-3, seed=7,
        precision="f64",
        model=ModelConfig(d_lm=64, d_gcn=32, seed=7),
    )
    started = time.monotonic()
    model, run = train(cfg, stop_at_accuracy=1.0)
    elapsed = time.monotonic() - started
    acc = train_accuracy(model, load_samples(cfg.train_path, cfg))
    ok = acc == 1.0 and len(run.train_loss) <= 500 and elapsed < 300.0
    report("criterion 5: 100% training accuracy on 16-sample fixture",
           ok, f"acc {acc:.2f}, {len(run.train_loss)} epochs, {elapsed:.1f}s")


def test_criterion_6_input_assembly_matches_golden_file():
    import pathlib
    golden = pathlib.Path(__file__).parent / "golden" / "input_assembly.json"
    cases = json.loads(golden.read_text())
    assert len(cases) == 20
    texts = [c["target"] for c in cases] + [
        t for c in cases for t in c["context"]
    ]
    vocab = Vocab.build(
        texts, extra_tokens=["anger", "happiness", "neutral", "sadness"])
    mismatches = 0
    for case in cases:
        ctx = tuple(
            Utterance(f"c{i}", "B", t) for i, t in enumerate(case["context"]))
        window = ContextWindow(
            Utterance("t", "A", case["target"]), ctx, len(ctx))
        seq = build_input(window, case["emotion"], vocab, case["t_max"])
        if (list(seq.tokens) != case["tokens"]
                or list(seq.segment_ids) != case["segments"]):
            mismatches += 1
    report("criterion 6: golden-file input assembly (20 windows)",
           mismatches == 0, f"{mismatches} mismatches")


def test_criterion_7_metrics_match_independent_rescoring():
    from sklearn.metrics import accuracy_score, confusion_matrix, recall_score

    rng = np.random.default_rng(99)
    labels = LabelSet.named("iemocap4")
    names = list(labels)
    pairs = [
        (names[rng.integers(4)], names[rng.integers(4)]) for _ in range(1000)
    ]
    m = compute_metrics(pairs, labels)
    golds = [g for g, _ in pairs]
    preds = [p for _, p in pairs]
    ref_conf = confusion_matrix(golds, preds, labels=names)
    ref_wa = accuracy_score(golds, preds)
    ref_recall = recall_score(golds, preds, labels=names, average=None)
    ref_per = dict(zip(names, ref_recall))
    ref_ua = float(np.mean(ref_recall))
    ok = (
        (m.confusion == ref_conf).all()
        and m.weighted_accuracy == ref_wa
        and m.per_label_accuracy == ref_per
        and m.unweighted_accuracy == ref_ua
    )
    report("criterion 7: metrics vs independent rescoring (1000 pairs)", ok)


def test_criterion_8_context_sweep_rows_and_determinism(tmp_path):
    cfg = ExperimentConfig(
        train_path=str(FIXTURES / "friends_mini.jsonl"),
        srl_path=str(FIXTURES / "srl_mini.json"),
        label_set="friends8",
        epochs=1, batch_size=4, lr=1e-3, seed=0, precision="f64",
        model=ModelConfig(d_lm=16, d_gcn=8, n_enc_layers=1, n_heads=2,
                          t_max=64, seed=3),
    )
    tables = []
    for run_dir in ("a", "b"):
        results = context_sweep(cfg, values=(0, 1, 2, 4, 8),
                                out_dir=tmp_path / run_dir)
        tables.append(sweep_table(results))
    names = [row["model"] for row in tables[0]]
    ok = (
        names == ["SRL-GNN-0", "SRL-GNN-1", "SRL-GNN-2", "SRL-GNN-4",
                  "SRL-GNN-8"]
        and all(set(row) == {"model", "wa", "ua"} for row in tables[0])
        and tables[0] == tables[1]
    )
    report("criterion 8: deterministic context sweep over [0,1,2,4,8]", ok)


def test_criterion_9_identical_seeds_give_bitwise_identical_checkpoints(tmp_path):
    cfg_dict = {
        "train_path": str(FIXTURES / "friends_mini.jsonl"),
        "srl_path": str(FIXTURES / "srl_mini.json"),
        "label_set": "friends8",
        "context_n": 1, "epochs": 2, "batch_size": 4, "lr": 1e-3,
        "seed": 5, "precision": "f64",
        "model": {"d_lm": 16, "d_gcn": 8, "n_enc_layers": 1, "n_heads": 2,
                  "t_max": 64, "seed": 3},
    }
    blobs = []
    for run_dir in ("a", "b"):
        out = tmp_path / run_dir
        train(ExperimentConfig.from_dict(cfg_dict), out_dir=out)
        blobs.append((out / "checkpoint.bin").read_bytes())
    report("criterion 9: bitwise-identical checkpoints across reruns",
           blobs[0] == blobs[1], f"{len(blobs[0])} bytes")
