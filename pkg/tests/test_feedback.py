import threading

import numpy as np
import pytest

from flowsentry.errors import (
    Conflict,
    DuplicateBatch,
    EmptyCriticalSet,
    Incomplete,
    InvalidLabel,
    InvalidSpec,
    NotAnImprovement,
    NotFound,
)
from flowsentry.feedback import FeedbackService
from flowsentry.graph import return_function


class Report:
    def __init__(self, n=10, seed=0, h=6):
        rng = np.random.default_rng(seed)
        self.samples = rng.random((n, h, h)).astype(np.float32)
        self.indices = np.arange(100, 100 + n)


@pytest.fixture()
def svc(tmp_path):
    return FeedbackService(tmp_path / "journal.jsonl")


class TestLabeling:
    def test_enqueue_preserves_rank_order(self, svc):
        tasks = svc.enqueue_labeling(Report(10), "run1")
        assert len(tasks) == 10
        fetched = svc.get_label_tasks("run1")
        assert [t.rank for t in fetched] == list(range(10))
        assert [t.origin_index for t in fetched] == list(range(100, 110))

    def test_duplicate_enqueue_rejected(self, svc):
        svc.enqueue_labeling(Report(3), "run1")
        with pytest.raises(DuplicateBatch):
            svc.enqueue_labeling(Report(3), "run1")

    def test_empty_report_rejected(self, svc):
        with pytest.raises(EmptyCriticalSet):
            svc.enqueue_labeling(Report(0), "run1")

    def test_pending_counts(self, svc):
        tasks = svc.enqueue_labeling(Report(10), "run1")
        for t in tasks[:3]:
            svc.submit_label(t.task_id, 5)
        assert len(svc.get_label_tasks("run1", status="pending")) == 7

    def test_submit_label(self, svc):
        (task,) = svc.enqueue_labeling(Report(1), "run1")
        out = svc.submit_label(task.task_id, 7)
        assert out.status == "labeled" and out.label == 7

    def test_label_out_of_range(self, svc):
        (task,) = svc.enqueue_labeling(Report(1), "run1")
        with pytest.raises(InvalidLabel):
            svc.submit_label(task.task_id, 12)

    def test_relabel_conflicts(self, svc):
        (task,) = svc.enqueue_labeling(Report(1), "run1")
        svc.submit_label(task.task_id, 1)
        with pytest.raises(Conflict):
            svc.submit_label(task.task_id, 2)

    def test_unknown_task(self, svc):
        with pytest.raises(NotFound):
            svc.submit_label("nope", 1)


class TestFinding:
    def test_pool_size(self, svc, rng):
        train = rng.random((50, 6, 6)).astype(np.float32)
        tasks = svc.enqueue_finding(Report(4), train, "run1", pool_size=8)
        assert all(len(t.candidate_pool) == 8 for t in tasks)

    def test_exact_copy_ranks_first(self, svc, rng):
        train = rng.random((30, 6, 6)).astype(np.float32)
        report = Report(1)
        report.samples = train[17:18].copy()
        (task,) = svc.enqueue_finding(report, train, "run1", pool_size=5)
        assert task.candidate_pool[0] == 17
        assert task.candidates[0].distance == 0.0

    def test_ranking_matches_brute_force(self, svc, rng):
        train = rng.random((200, 5, 5)).astype(np.float32)
        report = Report(3, seed=5, h=5)
        tasks = svc.enqueue_finding(report, train, "run1", pool_size=10)
        for task, sample in zip(tasks, report.samples):
            dists = [float(np.sqrt(((t - sample) ** 2).sum())) for t in train]
            oracle = sorted(range(200), key=lambda k: (dists[k], k))[:10]
            assert task.candidate_pool == oracle

    def test_match_must_come_from_pool(self, svc, rng):
        train = rng.random((20, 6, 6)).astype(np.float32)
        (task,) = svc.enqueue_finding(Report(1), train, "run1", pool_size=3)
        outside = next(i for i in range(20) if i not in task.candidate_pool)
        with pytest.raises(InvalidSpec):
            svc.submit_match(task.task_id, outside)
        out = svc.submit_match(task.task_id, task.candidate_pool[1])
        assert out.status == "matched"


class TestCollect:
    def test_all_labeled(self, svc):
        tasks = svc.enqueue_labeling(Report(10), "run1")
        for k, t in enumerate(tasks):
            svc.submit_label(t.task_id, k % 10)
        batch = svc.collect_feedback("run1", "labels")
        assert batch.kind == "labels" and len(batch) == 10
        assert [i.label for i in batch.items] == [k % 10 for k in range(10)]

    def test_skips_excluded(self, svc):
        tasks = svc.enqueue_labeling(Report(10), "run1")
        for t in tasks[:8]:
            svc.submit_label(t.task_id, 3)
        for t in tasks[8:]:
            svc.skip_label(t.task_id)
        assert len(svc.collect_feedback("run1", "labels")) == 8

    def test_pending_means_incomplete(self, svc):
        tasks = svc.enqueue_labeling(Report(3), "run1")
        svc.submit_label(tasks[0].task_id, 1)
        with pytest.raises(Incomplete) as err:
            svc.collect_feedback("run1", "labels")
        assert err.value.unresolved == 2

    def test_concurrent_submissions_all_collected(self, svc):
        tasks = svc.enqueue_labeling(Report(40), "run1")
        results = []

        def worker(chunk):
            for t in chunk:
                results.append((t.task_id, svc.submit_label(t.task_id, 4).label))

        threads = [threading.Thread(target=worker, args=(tasks[i::4],)) for i in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        batch = svc.collect_feedback("run1", "labels")
        assert len(batch) == 40 == len(results)


class TestPromotions:
    def test_approve_updates_active_and_ledger(self, svc):
        promo = svc.request_promotion("old", "new", 0.90, 0.93, "run1")
        assert promo.decision == "pending"
        assert svc.active_model_ref is None
        svc.resolve_promotion(promo.promo_id, "approved")
        assert svc.active_model_ref == "new"
        assert return_function(svc.ledger) == pytest.approx(0.03)

    def test_equal_quality_not_an_improvement(self, svc):
        with pytest.raises(NotAnImprovement):
            svc.request_promotion("old", "new", 0.90, 0.90, "run1")

    def test_reject_leaves_active_unchanged(self, svc):
        promo = svc.request_promotion("old", "new", 0.90, 0.93, "run1")
        svc.resolve_promotion(promo.promo_id, "rejected")
        assert svc.active_model_ref is None
        assert len(svc.ledger) == 0

    def test_double_resolve_conflicts(self, svc):
        promo = svc.request_promotion("old", "new", 0.90, 0.93, "run1")
        svc.resolve_promotion(promo.promo_id, "approved")
        with pytest.raises(Conflict):
            svc.resolve_promotion(promo.promo_id, "rejected")

    def test_auto_approve(self, tmp_path):
        svc = FeedbackService(tmp_path / "j.jsonl", auto_approve=True)
        promo = svc.request_promotion("old", "new", 0.5, 0.6, "run1")
        assert promo.decision == "approved"
        assert svc.active_model_ref == "new"


class TestDurability:
    def test_journal_replay_restores_state(self, tmp_path, rng):
        journal = tmp_path / "j.jsonl"
        svc = FeedbackService(journal)
        tasks = svc.enqueue_labeling(Report(5), "run1")
        svc.submit_label(tasks[0].task_id, 7)
        svc.skip_label(tasks[1].task_id)
        train = rng.random((20, 6, 6)).astype(np.float32)
        finds = svc.enqueue_finding(Report(2, seed=3), train, "run1", pool_size=4)
        svc.submit_match(finds[0].task_id, finds[0].candidate_pool[0])
        promo = svc.request_promotion("a", "b", 0.1, 0.2, "run1")
        svc.resolve_promotion(promo.promo_id, "approved")

        back = FeedbackService(journal)
        assert back.active_model_ref == "b"
        assert return_function(back.ledger) == pytest.approx(0.1)
        restored = {t.task_id: t for t in back.get_label_tasks("run1")}
        assert restored[tasks[0].task_id].label == 7
        assert restored[tasks[1].task_id].status == "skipped"
        rfinds = {t.task_id: t for t in back.get_find_tasks("run1")}
        assert rfinds[finds[0].task_id].match_index == finds[0].candidate_pool[0]
        np.testing.assert_array_equal(
            restored[tasks[0].task_id].sample,
            {t.task_id: t for t in svc.get_label_tasks("run1")}[tasks[0].task_id].sample)
        with pytest.raises(DuplicateBatch):
            back.enqueue_labeling(Report(5), "run1")
