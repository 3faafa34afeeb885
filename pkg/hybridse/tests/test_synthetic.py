import collections

import numpy as np
import pytest

from hybridse.corpus import read_records
from hybridse.errors import UsageError
from hybridse.predict import CLASSIFICATION, REGRESSION
from hybridse.synthetic import generate_synthetic_corpus, \
    make_admission_dataset, read_topic_labels, SENTENCES_PER_ADMISSION, \
    TOPICS, write_synthetic_corpus


class TestSyntheticCorpus(object):
    def setup_method(self):
        self.corpus = generate_synthetic_corpus(100, n_topics=3, seed=42)

    def test_balanced_topics(self):
        counts = collections.Counter(self.corpus.labels)
        assert sorted(counts) == sorted(list(TOPICS)[:3])
        assert sorted(counts.values()) == [33, 33, 34]

    def test_records(self):
        records = self.corpus.records
        assert len(records) == 100
        assert len(set(r.record_id for r in records)) == 100
        assert records[0].record_id == 'syn000000:0'
        assert records[SENTENCES_PER_ADMISSION].admission_id == 'adm00001'
        assert all(r.word_count >= 5 for r in records)

    def test_seeded(self):
        again = generate_synthetic_corpus(100, n_topics=3, seed=42)
        other = generate_synthetic_corpus(100, n_topics=3, seed=43)
        assert again == self.corpus
        assert other.records != self.corpus.records

    def test_topic_vocabulary(self):
        for record, topic in zip(self.corpus.records, self.corpus.labels):
            pool = TOPICS[topic]
            assert any(f in record.text for f in pool['findings'])

    def test_files(self, tmp_path):
        records_path = str(tmp_path / 'records.jsonl')
        labels_path = str(tmp_path / 'labels.tsv')
        write_synthetic_corpus(self.corpus, records_path, labels_path)
        assert read_records(records_path) == self.corpus.records
        labels = read_topic_labels(labels_path)
        assert list(labels) == [r.record_id for r in self.corpus.records]
        assert list(labels.values()) == self.corpus.labels

    @pytest.mark.parametrize('n_sentences, n_topics', [(10, 1), (10, 7),
                                                       (2, 3)])
    def test_invalid(self, n_sentences, n_topics):
        with pytest.raises(UsageError):
            generate_synthetic_corpus(n_sentences, n_topics=n_topics)


class TestAdmissionDatasets(object):
    def test_default_prevalence(self):
        dataset = make_admission_dataset(1000, seed=0)
        assert dataset.kind == CLASSIFICATION
        assert dataset.labels.sum() == 110
        assert dataset.dim == 8

    def test_signal_in_first_feature(self):
        dataset = make_admission_dataset(2000, positives=1000, seed=1)
        features, labels = dataset.features, dataset.labels
        assert features[labels == 1, 0].mean() > \
            features[labels == 0, 0].mean() + 1.0
        assert abs(features[labels == 1, 1].mean() -
                   features[labels == 0, 1].mean()) < 0.2

    def test_oracle(self):
        dataset = make_admission_dataset(50, positives=10, oracle=True)
        assert dataset.dim == 1
        assert np.array_equal(dataset.features[:, 0], dataset.labels)

    def test_regression_range(self):
        dataset = make_admission_dataset(500, REGRESSION, seed=2)
        assert dataset.labels.min() >= 5.0
        assert dataset.labels.max() <= 120.0

    def test_invalid(self):
        with pytest.raises(UsageError):
            make_admission_dataset(0)
        with pytest.raises(UsageError):
            make_admission_dataset(10, positives=11)
        with pytest.raises(UsageError):
            make_admission_dataset(10, kind='ranking')
