"""Hard-EM trainer: configuration checks, E-step behavior, evaluation
reports, and small end-to-end training runs on both domains."""

import random

import pytest

from spansem.cky import Grammar
from spansem.core import Utterance
from spansem.data.geo import (
    exec_funql,
    geo_lexicon_entries,
    geo_schema,
    mini_geo_corpus,
    mini_kb,
)
from spansem.data.scan import (
    exec_scan,
    generate_scan_sp,
    scan_lexicon_entries,
    scan_schema,
)
from spansem.scorer import Lexicon, SpanScorer
from spansem.trainer import (
    ConfigError,
    Domain,
    TrainConfig,
    TrainExample,
    evaluate,
    hard_em_step,
    predict,
    target_tree,
    train,
    vocabulary,
)
from spansem.typesys import parse_program, program_of_tree


@pytest.fixture(scope="module")
def scan_domain():
    return Domain("scan", scan_schema(),
                  Lexicon.from_pairs(scan_lexicon_entries()), exec_scan)


@pytest.fixture(scope="module")
def short_examples(scan_domain):
    """Commands of at most four tokens, shuffled with a fixed seed."""
    pool = [TrainExample(e.utterance, e.program, e.tree, e.actions)
            for e in generate_scan_sp(scan_domain.schema)
            if len(e.utterance) <= 4]
    random.Random(0).shuffle(pool)
    return pool


# --- configuration ----------------------------------------------------------


@pytest.mark.parametrize("bad", [
    dict(lr=0.0), dict(lr=-1.0), dict(batch_size=0), dict(max_epochs=0),
    dict(patience=0), dict(K=0), dict(lam=-0.5), dict(momentum=1.0),
    dict(momentum=-0.1), dict(curriculum_epochs=-1),
])
def test_config_rejects_bad_values(bad):
    with pytest.raises(ConfigError):
        TrainConfig(**bad).validate()


def test_config_defaults_are_valid():
    TrainConfig().validate()


def test_train_rejects_empty_training_set(scan_domain):
    with pytest.raises(ConfigError):
        train([], [], scan_domain, TrainConfig())


def test_vocabulary_is_sorted_union(short_examples):
    vocab = vocabulary(short_examples[:50])
    assert vocab == sorted(set(vocab))
    assert all(t in vocab for t in short_examples[0].utterance.tokens)


# --- domain wrapper ---------------------------------------------------------


def test_domain_run_swallows_executor_errors(scan_domain):
    assert scan_domain.run(None) is None
    assert scan_domain.run(scan_domain.schema.atom("turn")) is None  # ExecError
    walk = scan_domain.schema.atom("walk")
    assert scan_domain.run(walk) == ("WALK",)


# --- E-step -----------------------------------------------------------------


def fresh_scorer(examples, domain, config):
    return SpanScorer(vocabulary(examples), domain.schema.categories(),
                      lam=config.lam, seed=config.seed)


def test_target_tree_prefers_gold_tree_when_configured(scan_domain,
                                                       short_examples):
    config = TrainConfig(use_gold_trees=True)
    scorer = fresh_scorer(short_examples, scan_domain, config)
    ex = short_examples[0]
    assert target_tree(scorer, ex, scan_domain, Grammar(), config) is ex.tree


def test_target_tree_constrained_parse_matches_gold_program(scan_domain,
                                                            short_examples):
    config = TrainConfig()
    scorer = fresh_scorer(short_examples, scan_domain, config)
    for ex in short_examples[:10]:
        tree = target_tree(scorer, ex, scan_domain, Grammar(), config)
        assert tree is not None
        assert program_of_tree(tree, scan_domain.schema) == ex.program


def test_hard_em_step_skips_unparseable_examples(scan_domain, short_examples):
    # a one-token utterance cannot host the three constants of this program
    program = parse_program("and(walk, jump)", scan_domain.schema)
    impossible = TrainExample(Utterance.from_text("walk"), program)
    config = TrainConfig()
    scorer = fresh_scorer(short_examples, scan_domain, config)
    batch = [short_examples[0], impossible]
    loss, used, skipped, grads = hard_em_step(scorer, batch, scan_domain,
                                              Grammar(), config)
    assert (used, skipped) == (1, 1)
    assert loss > 0.0
    assert any(abs(g).sum() > 0 for g in grads.values())


def test_hard_em_step_gradients_are_averaged(scan_domain, short_examples):
    config = TrainConfig()
    scorer = fresh_scorer(short_examples, scan_domain, config)
    ex = short_examples[0]
    _, _, _, g1 = hard_em_step(scorer, [ex], scan_domain, Grammar(), config)
    _, _, _, g2 = hard_em_step(scorer, [ex, ex], scan_domain, Grammar(),
                               config)
    for key in g1:
        assert g1[key] == pytest.approx(g2[key])


# --- evaluation -------------------------------------------------------------


def test_evaluate_report_shape(scan_domain, short_examples):
    config = TrainConfig()
    scorer = fresh_scorer(short_examples, scan_domain, config)
    report = evaluate(scorer, short_examples[:6], scan_domain, Grammar())
    assert set(report) == {"accuracy", "failures", "per_example", "f1"}
    assert 0.0 <= report["accuracy"] <= 1.0
    assert len(report["per_example"]) == 6
    record = report["per_example"][0]
    assert set(record) == {"utterance", "gold_program", "predicted_program",
                           "correct"}


def test_evaluate_omits_f1_without_gold_trees(scan_domain, short_examples):
    config = TrainConfig()
    scorer = fresh_scorer(short_examples, scan_domain, config)
    stripped = [TrainExample(ex.utterance, ex.program, None, ex.denotation)
                for ex in short_examples[:4]]
    report = evaluate(scorer, stripped, scan_domain, Grammar())
    assert "f1" not in report


# --- end-to-end training ----------------------------------------------------


def test_hard_em_training_fits_short_commands(scan_domain, short_examples):
    train_set, dev_set = short_examples[:80], short_examples[80:110]
    result = train(train_set, dev_set, scan_domain,
                   TrainConfig(max_epochs=10, patience=5, seed=0))
    assert result.best_dev_accuracy == 1.0
    assert result.history[-1]["dev_accuracy"] == 1.0
    assert result.history[0]["epoch"] == 0
    # the returned scorer generalizes to unseen short commands
    held_out = short_examples[110:130]
    report = evaluate(result.scorer, held_out, scan_domain, Grammar())
    assert report["accuracy"] >= 0.9


def test_gold_tree_training_matches_hard_em_on_short_commands(
        scan_domain, short_examples):
    train_set, dev_set = short_examples[:80], short_examples[80:110]
    result = train(train_set, dev_set, scan_domain,
                   TrainConfig(max_epochs=10, patience=5, seed=0,
                               use_gold_trees=True))
    assert result.best_dev_accuracy == 1.0
    assert all(h["skipped"] == 0 for h in result.history)


def test_training_writes_jsonl_log(tmp_path, scan_domain, short_examples):
    import json

    log = tmp_path / "log.jsonl"
    result = train(short_examples[:30], short_examples[30:40], scan_domain,
                   TrainConfig(max_epochs=2, patience=5, seed=0),
                   log_path=log)
    lines = [json.loads(line) for line in log.read_text().splitlines()]
    assert len(lines) == len(result.history)
    assert set(lines[0]) == {"epoch", "train_loss", "used", "skipped",
                             "dev_accuracy"}


def test_early_stopping_keeps_best_parameters(scan_domain, short_examples):
    train_set, dev_set = short_examples[:60], short_examples[60:80]
    result = train(train_set, dev_set, scan_domain,
                   TrainConfig(max_epochs=10, patience=5, seed=0))
    report = evaluate(result.scorer, dev_set, scan_domain, Grammar())
    assert report["accuracy"] == pytest.approx(result.best_dev_accuracy)


def test_geo_training_on_simple_questions():
    kb = mini_kb()
    schema = geo_schema(kb)
    lexicon = Lexicon.from_pairs(geo_lexicon_entries()).merged_with(
        Lexicon.from_entity_lexicon(schema.entity_lexicon))
    domain = Domain("geo", schema, lexicon, lambda z: exec_funql(z, kb))
    simple = [it for it in mini_geo_corpus(kb) if it[1].count("(") <= 2][:20]
    examples = []
    for text, program_text in simple:
        program = parse_program(program_text, schema)
        examples.append(TrainExample(Utterance.from_text(text), program,
                                     denotation=exec_funql(program, kb)))
    result = train(examples, examples[:8], domain,
                   TrainConfig(lr=0.0005, momentum=0.0, max_epochs=25,
                               patience=20, seed=0))
    assert result.best_dev_accuracy == 1.0
    ex = examples[0]
    parsed = predict(result.scorer, ex.utterance, domain, Grammar(), 5)
    assert parsed is not None
    assert domain.run(parsed.program) == ex.denotation
