import math

import numpy as np
import pytest

import tinyvlm


def test_activations():
    x = np.array([0.0, 1.0, 50.0, -50.0])
    y = tinyvlm.mish(x)
    assert y[0] == 0.0
    assert y[1] == pytest.approx(0.8650983882673103, rel=1e-12)
    assert y[2] == pytest.approx(50.0, rel=1e-12)
    assert abs(y[3]) < 1e-12

    s = tinyvlm.softmax(np.zeros(4))
    assert np.allclose(s, 0.25)
    rows = tinyvlm.softmax(np.random.default_rng(0).normal(size=(3, 5)), axis=1)
    assert np.allclose(rows.sum(axis=1), 1.0)


def test_merge_plan():
    assert tinyvlm.merge_plan(24, 144) == (2, 2)
    assert tinyvlm.merge_plan(24, 576) == (1, 1)
    assert tinyvlm.merge_plan(24, 1) == (24, 24)
    for count in (576, 288, 144, 72, 64, 36, 18, 8, 4, 2, 1):
        ph, pw = tinyvlm.merge_plan(24, count)
        assert (24 // ph) * (24 // pw) == count
    with pytest.raises(Exception):
        tinyvlm.merge_plan(24, 100)


def test_projector_param_count():
    assert tinyvlm.projector_param_count("linear", 32, 64, 16, 4) == 2112
    assert tinyvlm.projector_param_count("mlp", 32, 64, 16, 4) == 6272
    assert tinyvlm.projector_param_count("xdp", 32, 64, 4, 4) == 12416


def test_vocabulary_round_trip():
    vocab = tinyvlm.corpus_vocabulary()
    ids = vocab.encode("what color is the circle ?")
    assert vocab.decode(ids) == "what color is the circle ?"
    assert vocab.encode("") == []


def test_corpus_train_eval_answer(tmp_path):
    corpus = str(tmp_path / "corpus")
    tinyvlm.gen_corpus(corpus, seed=5, align=8, instruct=8, eval=4)
    assert tinyvlm.verify_corpus(corpus) == 0

    vocab = tinyvlm.corpus_vocabulary()
    cfg = tinyvlm.ModelConfig.toy(vocab.size)
    model = tinyvlm.VlmModel(cfg, seed=5)
    assert model.param_count() > 0
    assert model.projector_param_count() == tinyvlm.projector_param_count("xdp", 32, 64, 4, 4)

    result = tinyvlm.train_two_stage(
        model,
        corpus,
        str(tmp_path / "run"),
        seed=5,
        stage1={"epochs": 1, "batch_size": 8, "learning_rate": 1e-2},
        stage2={"epochs": 2, "batch_size": 8, "learning_rate": 2e-3},
    )
    assert math.isfinite(result["stage1_final_loss"])
    assert math.isfinite(result["stage2_final_loss"])

    metrics = tinyvlm.evaluate(model, corpus, split="eval")
    assert math.isfinite(metrics["mean_loss"])
    assert 0.0 <= metrics["masked_token_accuracy"] <= 1.0

    image = np.full((3, 32, 32), 0.08)
    text = model.answer(image, "how many shapes are there ?", max_new=12)
    assert isinstance(text, str)

    # checkpoints round-trip through the filesystem
    loaded = tinyvlm.VlmModel.load(result["stage2_checkpoint"])
    assert loaded.param_count() == model.param_count()
    again = loaded.answer(image, "how many shapes are there ?", max_new=12)
    assert again == text
