import os

import pytest

from hybridse.corpus import build_vocab, clean_text, filter_fragments, \
    load_abbreviations, preprocess_corpus, RawDocument, read_documents, \
    read_records, read_vocab, SentenceRecord, segment_sentences, \
    SPECIAL_TOKENS, tokenize, UNK, Vocabulary, write_records, write_vocab
from hybridse.errors import FormatError, InputError, UsageError

DATA_DIR = os.path.join(os.path.dirname(__file__), 'data')
GOLDEN_NOTES = os.path.join(DATA_DIR, 'golden_notes.jsonl')
GOLDEN_SEGMENTATION = os.path.join(DATA_DIR, 'golden_segmentation.tsv')


def _golden_expected():
    with open(GOLDEN_SEGMENTATION, encoding='utf-8') as f:
        return [tuple(line.rstrip('\n').split('\t')) for line in f]


def test_clean_text():
    assert clean_text('Name: ___ ===\nSex: F\r\n') == 'Name: Sex: F'
    assert clean_text('  a\n\nb  ') == 'a b'
    assert clean_text('') == ''


def test_segment_abbreviations_and_numbers():
    text = 'Dr. Smith saw the patient. Creatinine was 21.7 today.'
    assert segment_sentences(text) == ['Dr. Smith saw the patient.',
                                       'Creatinine was 21.7 today.']


def test_segment_initials_and_terminators():
    text = 'Seen by J. Doe today! Is he better? Yes... he is.'
    assert segment_sentences(text) == ['Seen by J. Doe today!',
                                       'Is he better?', 'Yes...',
                                       'he is.']


def test_segment_keeps_unterminated_tail():
    assert segment_sentences('Stable overnight. Plan discharge') == \
        ['Stable overnight.', 'Plan discharge']


def test_segment_custom_abbreviations():
    text = 'Given approx. two liters. Then stopped.'
    assert segment_sentences(text, abbreviations=set()) == \
        ['Given approx.', 'two liters.', 'Then stopped.']
    assert segment_sentences(text, abbreviations={'approx'}) == \
        ['Given approx. two liters.', 'Then stopped.']


def test_abbreviation_table():
    table = load_abbreviations()
    assert {'dr', 'e.g', 'vs'} <= table
    assert all(not entry.endswith('.') for entry in table)


def test_filter_fragments():
    records = filter_fragments(['Too short here.', 'This one has five words.',
                                'Another sentence that is long enough.'],
                               doc_id='d1', admission_id='a1')
    assert [r.index for r in records] == [0, 1]
    assert records[0] == SentenceRecord('d1', 'a1', 0,
                                        'This one has five words.', 5)
    assert records[1].record_id == 'd1:1'


class TestGoldenCorpus(object):
    def setup_method(self):
        self.documents = read_documents(GOLDEN_NOTES)
        self.records = preprocess_corpus(self.documents)

    def test_document_count(self):
        assert len(self.documents) == 50

    def test_matches_golden_segmentation(self):
        assert [(r.record_id, r.text) for r in self.records] == \
            _golden_expected()

    def test_output_contract(self):
        for record in self.records:
            assert '=' not in record.text
            assert '_' not in record.text
            assert '\n' not in record.text
            assert record.word_count >= 5
            assert record.word_count == len(record.text.split())

    def test_admissions_carried(self):
        by_doc = {d.doc_id: d.admission_id for d in self.documents}
        assert all(r.admission_id == by_doc[r.doc_id] for r in self.records)

    def test_parallel_matches_serial(self):
        assert preprocess_corpus(self.documents, num_processors=2) == \
            self.records

    def test_input_order_irrelevant(self):
        assert preprocess_corpus(self.documents[::-1]) == self.records


def test_duplicate_doc_id():
    doc = RawDocument('d', 'a', 's', 'The patient is doing well today.')
    with pytest.raises(InputError):
        preprocess_corpus([doc, doc])


def test_empty_corpus():
    assert preprocess_corpus([]) == []


def test_tokenize():
    assert tokenize("Pt's BP 120/80, e.g. stable.") == \
        ["pt's", 'bp', '120/80', ',', 'e.g', '.', 'stable', '.']


class TestVocabulary(object):
    def setup_method(self):
        self.vocab = build_vocab(['b a c a', 'a b d'], min_frequency=2)

    def test_specials_first(self):
        assert tuple(self.vocab.tokens[:4]) == SPECIAL_TOKENS

    def test_frequency_order(self):
        assert self.vocab.tokens[4:] == ['a', 'b']

    def test_unknown(self):
        assert self.vocab.encode(['a', 'zzz']) == [4, UNK]
        assert 'c' not in self.vocab

    def test_max_size(self):
        vocab = build_vocab(['b a c a', 'a b d'], min_frequency=1,
                            max_size=6)
        assert vocab.tokens[4:] == ['a', 'b']

    def test_round_trip(self, tmp_path):
        path = str(tmp_path / 'vocab.tsv')
        write_vocab(self.vocab, path)
        assert read_vocab(path) == self.vocab

    def test_malformed_file(self, tmp_path):
        path = tmp_path / 'vocab.tsv'
        path.write_text('0\t<pad>\n2\t<unk>\n')
        with pytest.raises(FormatError) as excinfo:
            read_vocab(str(path))
        assert excinfo.value.line == 2

    def test_empty_corpus(self):
        with pytest.raises(UsageError):
            build_vocab([])

    def test_duplicate_token(self):
        with pytest.raises(InputError):
            Vocabulary(['a', 'a'])


def test_records_round_trip(tmp_path):
    path = str(tmp_path / 'records.jsonl')
    records = preprocess_corpus(read_documents(GOLDEN_NOTES))[:10]
    write_records(records, path)
    assert read_records(path) == records


def test_malformed_records(tmp_path):
    path = tmp_path / 'records.jsonl'
    path.write_text('{"doc_id": "d"}\n')
    with pytest.raises(FormatError):
        read_records(str(path))
    path.write_text('not json\n')
    with pytest.raises(FormatError):
        read_records(str(path))
