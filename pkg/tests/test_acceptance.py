"""Shipping gate: every published guarantee, one verdict line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the verdict lines.
Criteria 5 and 6 need the full UGRansome CSV (see conftest.real_csv_path);
without it they skip loudly instead of passing vacuously.
"""

import math

import numpy as np
import pytest

from conftest import real_csv_path, synthetic_csv_text

from ransomflow import rng
from ransomflow.analytics import (
    anomaly_by_family,
    financial_report,
    malware_distribution,
    rank_families,
)
from ransomflow.cli import main
from ransomflow.dataset import (
    FeatureMatrix,
    clean_timestamps,
    dataset_stats,
    deduplicate,
    label_encode,
    normalize,
    parse_csv,
    stratified_indices,
)
from ransomflow.gbt import GbtParams, grad_hess, predict_labels, train_gbt
from ransomflow.lstm import (
    LstmCell,
    LstmConfig,
    cell_forward,
    create_classifier,
    sequence_backward,
    sequence_forward,
    train_classifier,
)
from ransomflow.lstm import predict as lstm_predict
from ransomflow.metrics import compare, confusion, report
from ransomflow.nn import (
    DenseLayer,
    cross_entropy_loss,
    dense_backward,
    dense_backward_preact,
    dense_forward,
    grad_check,
    mse_loss,
)
from ransomflow.sae import SAEConfig, build_stack, encode

from test_metrics import GBT_FIXTURE, SAE_LSTM_FIXTURE, fixture_report


def verdict(name: str, ok: bool, detail: str = "") -> None:
    suffix = f" ({detail})" if detail else ""
    print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}{suffix}")
    assert ok, f"{name}{suffix}"


def skip_line(name: str, reason: str):
    print(f"\nACCEPTANCE {name}: SKIP ({reason})")
    pytest.skip(f"WARNING: {name} skipped; {reason}")


# ---------------------------------------------------------------------------
# 1. Exact parameter counts of the default architectures


def test_c1_parameter_counts():
    sae_model = build_stack(rng.uniform(1, (8, 13)), SAEConfig(epochs=0))
    per_layer = sae_model.layer_param_counts
    lstm_model = create_classifier(13, 3, LstmConfig())
    ok = (sae_model.param_count == 11026
          and per_layer == [1050, 3800, 663, 700, 3825, 988]
          and lstm_model.param_count == 122811
          and lstm_model.cells[0].param_count == 122304
          and lstm_model.head.param_count == 507)
    verdict("1-parameter-counts", ok,
            f"sae {sae_model.param_count} {per_layer}, "
            f"lstm {lstm_model.cells[0].param_count}+"
            f"{lstm_model.head.param_count}={lstm_model.param_count}")


# ---------------------------------------------------------------------------
# 2. Analytic gradients match central finite differences


def dense_fd_error(activation: str, seed: int) -> float:
    layer = DenseLayer.create(4, 3, activation, seed)
    x = rng.uniform_signed(rng.derive(seed, "x"), (5, 4), 1.0)
    params = layer.params()
    if activation == "softmax":
        labels = np.array([0, 1, 2, 1, 0])

        def loss_fn():
            out, cache = dense_forward(layer, x)
            loss, grad_logits = cross_entropy_loss(out, labels)
            _, gw, gb = dense_backward_preact(layer, cache, grad_logits)
            return loss, [gw, gb]
    else:
        target = rng.uniform(rng.derive(seed, "t"), (5, 3))

        def loss_fn():
            out, cache = dense_forward(layer, x)
            loss, grad = mse_loss(out, target)
            _, gw, gb = dense_backward(layer, cache, grad)
            return loss, [gw, gb]

    if activation == "relu":
        _, cache = dense_forward(layer, x)
        assert np.abs(cache.pre_activation).min() > 1e-3  # clear of the kink
    return grad_check(loss_fn, params)


def sae_stack_fd_error() -> float:
    data = rng.uniform(108, (3, 13))
    model = build_stack(data, SAEConfig(epochs=0, seed=8))
    layers = model.encoders + model.decoders
    params = []
    for layer in layers:
        params.extend(layer.params())
    current = data
    for layer in layers:
        _, cache = dense_forward(layer, current)
        if layer.activation == "relu":
            assert np.abs(cache.pre_activation).min() > 1e-3
        current = cache.output

    def loss_fn():
        value = data
        caches = []
        for layer in layers:
            value, cache = dense_forward(layer, value)
            caches.append(cache)
        loss, grad = mse_loss(value, data)
        grads = []
        for layer, cache in zip(reversed(layers), reversed(caches)):
            grad, gw, gb = dense_backward(layer, cache, grad)
            grads.extend([gb, gw])
        grads.reverse()
        return loss, grads

    return grad_check(loss_fn, params)


def lstm_fd_error(time_steps: int, seed: int) -> float:
    model = create_classifier(4, 3, LstmConfig(hidden_size=3, seed=seed))
    seqs = rng.uniform(rng.derive(seed, "seq"), (4, time_steps, 4))
    labels = np.array([0, 1, 2, 1])
    params = model.params()

    def loss_fn():
        probs, caches = sequence_forward(model, seqs)
        loss, grad_logits = cross_entropy_loss(probs, labels)
        grads, _ = sequence_backward(model, caches, grad_logits)
        return loss, grads

    return grad_check(loss_fn, params)


def gbt_fd_error() -> float:
    raw = rng.uniform_signed(19, (5, 3), 2.0)
    labels = np.array([0, 1, 2, 1, 0])
    g, h = grad_hess(labels, raw)

    def ce(row, label):
        shifted = row - row.max()
        return float(math.log(np.exp(shifted).sum()) - shifted[label])

    worst = 0.0
    for i in range(5):
        for c in range(3):
            up, down = raw[i].copy(), raw[i].copy()
            up[c] += 1e-5
            down[c] -= 1e-5
            num_g = (ce(up, labels[i]) - ce(down, labels[i])) / 2e-5
            worst = max(worst, abs(g[i, c] - num_g) / max(abs(num_g), 1.0))
            up, down = raw[i].copy(), raw[i].copy()
            up[c] += 1e-4
            down[c] -= 1e-4
            num_h = (ce(up, labels[i]) - 2 * ce(raw[i], labels[i])
                     + ce(down, labels[i])) / 1e-8
            worst = max(worst, abs(h[i, c] - num_h) / max(abs(num_h), 1.0))
    return worst


def test_c2_gradient_checks():
    dense_err = max(dense_fd_error(act, seed) for act, seed in
                    [("linear", 3), ("relu", 3), ("sigmoid", 11),
                     ("tanh", 11), ("softmax", 42)])
    sae_err = sae_stack_fd_error()
    lstm_err = max(lstm_fd_error(t, seed)
                   for t, seed in [(1, 7), (2, 11), (5, 13)])
    gbt_err = gbt_fd_error()
    ok = (dense_err < 1e-4 and sae_err < 1e-4 and lstm_err < 1e-4
          and gbt_err < 1e-6)
    verdict("2-gradient-checks", ok,
            f"dense {dense_err:.2e}, sae {sae_err:.2e}, "
            f"lstm {lstm_err:.2e}, gbt {gbt_err:.2e}")


# ---------------------------------------------------------------------------
# 3. Scalar cell against a calculator-level evaluation of the equations


def test_c3_lstm_cell_oracle():
    # unit weights, zero biases, x=1, zero states: every gate pre-activation
    # is exactly 1, so the cell equations collapse to the two lines below
    sig1 = 1.0 / (1.0 + math.exp(-1.0))
    c_ref = sig1 * math.tanh(1.0)
    h_ref = sig1 * math.tanh(c_ref)
    cell = LstmCell(
        w_i=np.ones((1, 2)), w_f=np.ones((1, 2)), w_o=np.ones((1, 2)),
        w_c=np.ones((1, 2)), b_i=np.zeros(1), b_f=np.zeros(1),
        b_o=np.zeros(1), b_c=np.zeros(1),
    )
    h, c, _ = cell_forward(cell, np.array([1.0]), np.zeros(1), np.zeros(1))
    ok = abs(c[0] - c_ref) < 1e-5 and abs(h[0] - h_ref) < 1e-5
    # the widely quoted rounded constants for this case (0.556746, 0.368603)
    # disagree with the direct evaluation by 2.4e-5 and 1.0e-3; the direct
    # evaluation is the oracle here (see the build notes)
    print(f"\n  cell oracle: c {c[0]:.9f} vs {c_ref:.9f}, "
          f"h {h[0]:.9f} vs {h_ref:.9f}; "
          f"quoted constants differ by {abs(c_ref - 0.556746):.1e} / "
          f"{abs(h_ref - 0.368603):.1e}")
    verdict("3-lstm-cell-oracle", ok,
            f"|dc| {abs(c[0] - c_ref):.2e}, |dh| {abs(h[0] - h_ref):.2e}")


# ---------------------------------------------------------------------------
# 4. Metrics against a naive counting oracle and published rows


def test_c4_metrics_oracle():
    n, k = 10000, 3
    y_true = (rng.splitmix64(101, n) % k).astype(np.int64)
    y_pred = (rng.splitmix64(202, n) % k).astype(np.int64)
    rep = report(confusion(y_true, y_pred, k))
    exact = True
    for c, name in enumerate(rep.class_names):
        tp = int(((y_true == c) & (y_pred == c)).sum())
        pred_c = int((y_pred == c).sum())
        true_c = int((y_true == c).sum())
        precision = tp / pred_c if pred_c else 0.0
        recall = tp / true_c if true_c else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else 0.0)
        cs = rep.per_class[name]
        exact &= (cs.precision == precision and cs.recall == recall
                  and cs.f1 == f1 and cs.support == true_c)
    exact &= rep.accuracy == float((y_true == y_pred).mean())

    p_a, r_a = SAE_LSTM_FIXTURE["precision"][0], SAE_LSTM_FIXTURE["recall"][0]
    f1_a = 2 * p_a * r_a / (p_a + r_a)
    f1_ok = abs(f1_a - SAE_LSTM_FIXTURE["f1"][0]) < 5e-6
    supports = np.array(SAE_LSTM_FIXTURE["support"], dtype=np.float64)
    weighted_p = float((np.array(SAE_LSTM_FIXTURE["precision"]) * supports).sum()
                       / supports.sum())
    wp_ok = abs(weighted_p - SAE_LSTM_FIXTURE["weighted"][0]) < 5e-6
    verdict("4-metrics-oracle", exact and f1_ok and wp_ok,
            f"counting oracle exact={exact}, f1 recomposition "
            f"{f1_a:.6f}, weighted precision {weighted_p:.6f}")


# ---------------------------------------------------------------------------
# 5. Full-dataset pipeline counts, stats, and analytics


_MISSING_CSV = ("UGRansome CSV not present; place it at data/UGRansome.csv "
                "or point UGRANSOME_CSV at it")


def cleaned_real_table(path):
    raw = parse_csv(path)
    table, _ = label_encode(raw)
    deduped, removed = deduplicate(table)
    cleaned, _ = clean_timestamps(deduped)
    return raw, table, deduped, removed, cleaned


def pct_like(dist, fragment: str) -> float:
    for name, _, pct in dist.entries:
        if fragment in name.lower():
            return pct
    return 0.0


def test_c5_dataset_pipeline():
    path = real_csv_path()
    if path is None:
        skip_line("5-dataset-pipeline", _MISSING_CSV)
    raw, _, deduped, removed, cleaned = cleaned_real_table(path)
    counts_ok = (raw.row_count == 207533 and deduped.row_count == 149042
                 and removed == 58491 and cleaned.row_count == 147985)
    dup_pct = 100.0 * removed / raw.row_count
    counts_ok &= abs(dup_pct - 28.2) < 0.1

    stats = dataset_stats(cleaned).columns
    stats_ok = (abs(stats["USD"].mean - 14873.43) < 0.01
                and abs(stats["USD"].std - 26859.50) < 0.01
                and abs(stats["BTC"].mean - 30.69) < 0.01
                and abs(stats["NetflowBytes"].mean - 2021.17) < 0.01)

    dist = malware_distribution(cleaned)
    dist_ok = (abs(pct_like(dist, "ssh") - 33.0) < 0.5
               and abs(pct_like(dist, "spam") - 31.0) < 0.5
               and abs(pct_like(dist, "udp") - 27.6) < 0.5
               and abs(pct_like(dist, "neris") - 8.3) < 0.5)

    fin = financial_report(cleaned)
    top_total = {name for name, _ in rank_families(fin, "total_usd", 3)}
    top_mean = {name for name, _ in rank_families(fin, "mean_usd", 3)}
    rank_ok = (top_total == {"Locky", "SamSam", "WannaCry"}
               and top_mean == {"NoobCrypt", "EDA2", "DMALocker"})
    money_ok = (abs(fin.global_mean_btc - 30.69) < 0.01
                and abs(fin.global_mean_usd - 14873.43) < 0.01)
    anomalies = anomaly_by_family(cleaned)
    anomaly_ok = anomalies[0][0] == "CryptoLocker" and anomalies[0][1] > 0

    ok = counts_ok and stats_ok and dist_ok and rank_ok and money_ok \
        and anomaly_ok
    verdict("5-dataset-pipeline", ok,
            f"rows {raw.row_count}->{deduped.row_count}->{cleaned.row_count}, "
            f"USD mean {stats['USD'].mean:.2f}, dist ssh {pct_like(dist, 'ssh'):.1f}, "
            f"top-total {sorted(top_total)}, most anomalous {anomalies[0][0]}")


# ---------------------------------------------------------------------------
# 6. Desk-scale training thresholds on a 5% stratified subsample


def test_c6_desk_scale_training():
    path = real_csv_path()
    if path is None:
        skip_line("6-desk-scale-training", _MISSING_CSV)
    _, _, _, _, cleaned = cleaned_real_table(path)
    _, keep = stratified_indices(cleaned.target_codes(), 0.05,
                                 rng.derive(1819, "subsample"))
    sample = cleaned.with_values(cleaned.values[keep], "5pct-sample")
    train_idx, test_idx = stratified_indices(sample.target_codes(), 0.2,
                                             rng.derive(1819, "split"))
    train_tbl = sample.with_values(sample.values[train_idx], "train")
    test_tbl = sample.with_values(sample.values[test_idx], "test")
    train_fm, stats = normalize(train_tbl)
    test_fm, _ = normalize(test_tbl, stats)

    sae_cfg = SAEConfig(epochs=50, seed=rng.derive(1819, "sae"))
    sae_model = build_stack(train_fm.x, sae_cfg)
    first_layer = sae_model.pretrain_losses[0]
    sae_ok = min(first_layer) < 0.5 * first_layer[0]

    lstm_cfg = LstmConfig(epochs=60, seed=rng.derive(1819, "lstm"))
    classifier, _ = train_classifier(encode(sae_model, train_fm.x),
                                     train_fm.y, lstm_cfg, 3)
    lstm_acc = float((lstm_predict(classifier, encode(sae_model, test_fm.x))
                      == test_fm.y).mean())

    gbt_model = train_gbt(train_fm, GbtParams(k_classes=3))
    gbt_acc = float((predict_labels(gbt_model, test_fm.x)
                     == test_fm.y).mean())

    ok = sae_ok and lstm_acc >= 0.90 and gbt_acc >= 0.85
    verdict("6-desk-scale-training", ok,
            f"{sample.row_count} rows, sae loss {first_layer[0]:.4f}->"
            f"{min(first_layer):.4f}, lstm acc {lstm_acc:.4f}, "
            f"gbt acc {gbt_acc:.4f}")


# ---------------------------------------------------------------------------
# 7. Published comparison: accuracy delta and winner


def test_c7_model_comparison():
    table = compare(fixture_report(SAE_LSTM_FIXTURE),
                    fixture_report(GBT_FIXTURE), "sae-lstm", "gbt")
    acc_row = table.row("accuracy")
    ok = (abs(acc_row.delta - 0.0298) <= 1e-4
          and acc_row.winner("sae-lstm", "gbt") == "sae-lstm")
    verdict("7-model-comparison", ok,
            f"delta {acc_row.delta:.6f}, winner "
            f"{acc_row.winner('sae-lstm', 'gbt')}")


# ---------------------------------------------------------------------------
# 8. Byte-identical reruns of every command


def _snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())
            if p.is_file()}


def test_c8_determinism(tmp_path, capsys):
    csv_path = tmp_path / "synthetic.csv"
    csv_path.write_text(synthetic_csv_text()[0], encoding="utf-8")
    art = tmp_path / "art"
    model_dir = tmp_path / "model"
    base_dir = tmp_path / "baseline"
    eval_dir = tmp_path / "eval"
    eval2_dir = tmp_path / "eval2"
    cmp_dir = tmp_path / "cmp"
    an_dir = tmp_path / "analysis"
    commands = [
        (["ingest", str(csv_path), "--output", str(art), "--seed", "9"], art),
        (["train", str(art), "--kind", "sae-lstm", "--output", str(model_dir),
          "--sae-epochs", "3", "--lstm-epochs", "5", "--lstm-hidden", "12",
          "--seed", "9"], model_dir),
        (["train", str(art), "--kind", "gbt", "--output", str(base_dir),
          "--gbt-rounds", "5", "--seed", "9"], base_dir),
        (["evaluate", str(model_dir / "bundle.json"), str(art),
          "--output", str(eval_dir)], eval_dir),
        (["evaluate", str(base_dir / "bundle.json"), str(art),
          "--output", str(eval2_dir)], eval2_dir),
        (["compare", str(eval_dir / "report.json"),
          str(eval2_dir / "report.json"), "--output", str(cmp_dir)], cmp_dir),
        (["analyze", str(art), "--output", str(an_dir)], an_dir),
    ]
    identical = True
    checked = 0
    for argv, out_dir in commands:
        assert main(argv) == 0
        first = _snapshot(out_dir)
        assert main(argv) == 0
        identical &= _snapshot(out_dir) == first
        checked += len(first)
    capsys.readouterr()
    verdict("8-determinism", identical,
            f"{len(commands)} commands, {checked} files byte-compared")
