"""Scikit-learn wrapper: param plumbing, fitting on raw events, serving."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from issr.estimator import ISSRRecommender
from issr.metrics import MetricsReport

SMALL = dict(d=4, context_len=2, num_targets=1, k_bipartite=1, k_cooc=1,
             num_samples=2, num_negatives=2, batch_size=8, epochs=2,
             learning_rate=0.05, seed=7)


def make_events(num_users=6, rating=False):
    """(user, item[, rating], timestamp) rows with sparse original ids."""
    rng = np.random.default_rng(9)
    rows = []
    t = 0
    for u in range(num_users):
        for item in rng.permutation(14)[:10]:
            if rating:
                rows.append([100 + u, 1000 + int(item), 5, t])
            else:
                rows.append([100 + u, 1000 + int(item), t])
            t += 1
    return rows


@pytest.fixture(scope="module")
def fitted():
    return ISSRRecommender(**SMALL).fit(make_events())


class TestSklearnProtocol:
    def test_get_params_covers_all_knobs(self):
        params = ISSRRecommender().get_params()
        assert len(params) == 17
        assert params["variant"] == "issr"
        assert params["split_ratios"] == (0.7, 0.1, 0.2)

    def test_clone_round_trips_params(self):
        est = ISSRRecommender(d=8, variant="only-intra", seed=3)
        assert clone(est).get_params() == est.get_params()

    def test_set_params_chains(self):
        est = ISSRRecommender().set_params(d=16, epochs=1)
        assert est.d == 16 and est.epochs == 1

    def test_unfitted_estimators_refuse_to_serve(self):
        est = ISSRRecommender()
        for call in (lambda: est.recommend([100]),
                     lambda: est.predict([100]),
                     lambda: est.evaluate(),
                     lambda: est.score()):
            with pytest.raises(NotFittedError):
                call()


class TestFit:
    def test_fit_returns_self_and_exposes_state(self, fitted):
        assert isinstance(fitted, ISSRRecommender)
        assert fitted.n_users_ == 6
        assert fitted.n_items_ == 14
        assert len(fitted.history_) == SMALL["epochs"]
        assert fitted.checkpoint_.epoch == SMALL["epochs"]

    def test_rating_column_is_ignored(self):
        a = ISSRRecommender(**SMALL).fit(make_events())
        b = ISSRRecommender(**SMALL).fit(make_events(rating=True))
        assert a.history_ == b.history_
        assert np.array_equal(a.recommend([100], k=3), b.recommend([100], k=3))

    @pytest.mark.parametrize("width", [2, 5])
    def test_wrong_column_count_rejected(self, width):
        X = np.ones((4, width))
        with pytest.raises(ValueError, match="columns"):
            ISSRRecommender(**SMALL).fit(X)

    def test_invalid_hyperparameters_surface_at_fit(self):
        with pytest.raises(ValueError, match="unknown variant"):
            ISSRRecommender(**{**SMALL, "variant": "bert4rec"}).fit(make_events())

    def test_refit_is_deterministic(self, fitted):
        again = ISSRRecommender(**SMALL).fit(make_events())
        assert again.history_ == fitted.history_
        assert np.array_equal(again.recommend([101], k=4),
                              fitted.recommend([101], k=4))


class TestServing:
    def test_recommend_returns_original_item_ids(self, fitted):
        recs = fitted.recommend([100, 101], k=3)
        assert recs.shape == (2, 3)
        assert all(1000 <= item < 1014 for item in recs.ravel())

    def test_recommend_excludes_user_history(self, fitted):
        events = make_events()
        for user in (100, 103, 105):
            seen = {item for u, item, _ in events if u == user}
            recs = fitted.recommend([user], k=4)[0]
            assert not (set(int(i) for i in recs) & seen)

    def test_recommend_prefix_stability(self, fitted):
        top1 = fitted.recommend([102], k=1)[0]
        top3 = fitted.recommend([102], k=3)[0]
        assert top3[0] == top1[0]

    def test_unknown_user_rejected(self, fitted):
        with pytest.raises(ValueError, match="unknown user id 999"):
            fitted.recommend([999])

    def test_oversized_k_rejected(self, fitted):
        # each user leaves only 4 of the 14 items unseen
        with pytest.raises(ValueError, match="cannot return top-5"):
            fitted.recommend([100], k=5)

    def test_predict_is_top_one(self, fitted):
        preds = fitted.predict([100, 101, 104])
        assert preds.shape == (3,)
        expect = fitted.recommend([100, 101, 104], k=1).ravel()
        assert np.array_equal(preds, expect)

    def test_predict_accepts_float_ids(self, fitted):
        assert fitted.predict(np.array([100.0]))[0] == fitted.predict([100])[0]


class TestEvaluation:
    def test_evaluate_returns_report_per_segment(self, fitted):
        test = fitted.evaluate("test")
        val = fitted.evaluate("val")
        assert isinstance(test, MetricsReport)
        # one val window and two test windows per user
        assert val.num_instances == 6
        assert test.num_instances == 12

    def test_score_is_test_recall_at_ten(self, fitted):
        assert fitted.score() == fitted.evaluate("test")[("recall", 10)]

    def test_evaluate_is_repeatable(self, fitted):
        assert fitted.evaluate("test").values == fitted.evaluate("test").values
