"""
Clinical note preprocessing: cleaning, sentence segmentation, fragment
filtering and vocabulary construction.

The pipeline turns :class:`RawDocument` objects into :class:`SentenceRecord`
objects::

    clean_text -> segment_sentences -> filter_fragments

and :func:`build_vocab` turns the resulting sentences into a
:class:`Vocabulary` for the encoder.

Corpora are stored one JSON object per line. Documents carry ``doc_id``,
``admission_id``, ``subject_id`` and ``text``; sentence records carry
``doc_id``, ``admission_id``, ``index``, ``text`` and ``word_count``.
"""
import collections
import json
import os
import re

from hybridse.errors import FormatError, InputError, UsageError
from hybridse.logging import get_logger
from hybridse.util import atomic_write, executor_for, read_lines, \
    run_ordered

_logger = get_logger(__name__)

MIN_WORDS = 5

PAD, UNK, BOS, EOS = 0, 1, 2, 3
SPECIAL_TOKENS = ('<pad>', '<unk>', '<s>', '</s>')

ABBREVIATIONS_PATH = os.path.join(os.path.dirname(__file__), 'data',
                                  'abbreviations.txt')

_LINE_BREAKS = re.compile(r'[\r\n]+')
_MASKING = re.compile(r'[=_]')
_WHITESPACE = re.compile(r'\s+')
_BOUNDARY = re.compile(r'[.!?]+(?=\s|$)')
_INITIAL = re.compile(r'^[A-Z]\.$')
_TOKEN = re.compile(r"\w+(?:[.'/-]\w+)*|[^\w\s]")


RawDocument = collections.namedtuple(
    'RawDocument', ['doc_id', 'admission_id', 'subject_id', 'text'])


class SentenceRecord(collections.namedtuple(
        'SentenceRecord', ['doc_id', 'admission_id', 'index', 'text',
                           'word_count'])):
    __slots__ = ()

    @property
    def record_id(self):
        """Identifier used in embedding stores: ``<doc_id>:<index>``"""
        return '{}:{}'.format(self.doc_id, self.index)


def load_abbreviations(path=ABBREVIATIONS_PATH):
    """Read an abbreviation table: one entry per line, ``#`` comments"""
    entries = set()
    with open(path, encoding='utf-8') as f:
        for line in f:
            line = line.split('#', 1)[0].strip().lower()
            if line:
                entries.add(line.rstrip('.'))
    return frozenset(entries)


ABBREVIATIONS = load_abbreviations()


def clean_text(raw):
    """Remove line breaks and masking characters.

    Examples
    --------
    >>> clean_text('Name: ____\\nSex: F')
    'Name: Sex: F'
    """
    text = _LINE_BREAKS.sub(' ', raw)
    text = _MASKING.sub('', text)
    return _WHITESPACE.sub(' ', text).strip()


def _is_abbreviation(token, abbreviations):
    # opening brackets and quotes are not part of the abbreviation
    token = token.lstrip('([{"\'')
    if _INITIAL.match(token):
        return True
    return token.lower().rstrip('.') in abbreviations


def segment_sentences(text, abbreviations=None):
    """Split cleaned text at sentence-final punctuation.

    A run of ``.``, ``!`` or ``?`` ends a sentence when it is followed by
    whitespace or the end of the text, unless it is a single period closing
    a known abbreviation or an initial such as ``J.``. Periods inside
    numbers (``21.7``) are never followed by whitespace and so never split.

    Parameters
    ----------
    text : str
        Output of :func:`clean_text`.
    abbreviations : set of str, optional
        Lowercase entries without their trailing period; defaults to the
        shipped table.

    Returns
    -------
    list of str
        Non-empty, trimmed sentences in text order.
    """
    if abbreviations is None:
        abbreviations = ABBREVIATIONS
    sentences = []
    start = 0
    for match in _BOUNDARY.finditer(text):
        end = match.end()
        if match.group() == '.':
            space = text.rfind(' ', start, match.start())
            token_start = start if space < 0 else space + 1
            if _is_abbreviation(text[token_start:end], abbreviations):
                continue
        sentence = text[start:end].strip()
        if sentence:
            sentences.append(sentence)
        start = end
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def word_count(sentence):
    return len(sentence.split())


def filter_fragments(sentences, doc_id='', admission_id=''):
    """Drop sentences of fewer than five whitespace-delimited words.

    Survivors keep their order and are numbered from 0.
    """
    records = []
    for sentence in sentences:
        count = word_count(sentence)
        if count >= MIN_WORDS:
            records.append(SentenceRecord(doc_id, admission_id, len(records),
                                          sentence, count))
    return records


def preprocess_document(document):
    """Run the whole pipeline over one :class:`RawDocument`"""
    sentences = segment_sentences(clean_text(document.text))
    return filter_fragments(sentences, document.doc_id,
                            document.admission_id)


def preprocess_corpus(documents, num_processors=1):
    """Preprocess every document; records are ordered by (doc_id, index).

    Parameters
    ----------
    documents : list of RawDocument
    num_processors : int
        Worker processes; 1 runs in the calling process.
    """
    documents = list(documents)
    seen = set()
    for doc in documents:
        if doc.doc_id in seen:
            raise InputError('Duplicate doc_id "{}"'.format(doc.doc_id))
        seen.add(doc.doc_id)
    with executor_for(num_processors) as executor:
        per_document = run_ordered(executor, preprocess_document, documents)
    records = [r for recs in per_document for r in recs]
    records.sort(key=lambda r: (r.doc_id, r.index))
    _logger.info('Preprocessed %d documents into %d sentences',
                 len(documents), len(records))
    return records


def tokenize(text):
    """Lowercased word and punctuation tokens.

    >>> tokenize('BP 120/80, stable.')
    ['bp', '120/80', ',', 'stable', '.']
    """
    return _TOKEN.findall(text.lower())


class Vocabulary(object):
    """Bijection between tokens and dense integer ids.

    Ids 0 to 3 hold the special tokens ``<pad>``, ``<unk>``, ``<s>`` and
    ``</s>``; every other token gets one id. Unknown tokens encode to
    ``UNK``.
    """
    pad_id = PAD
    unk_id = UNK
    bos_id = BOS
    eos_id = EOS

    def __init__(self, tokens, min_frequency=1):
        tokens = list(tokens)
        if tuple(tokens[:len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            tokens = list(SPECIAL_TOKENS) + tokens
        self.tokens = tokens
        self.index = {}
        for i, token in enumerate(tokens):
            if token in self.index:
                raise InputError('Token "{}" appears twice in the '
                                 'vocabulary'.format(token))
            self.index[token] = i
        self.min_frequency = min_frequency

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return 'Vocabulary({} tokens)'.format(len(self))

    def encode(self, tokens):
        return [self.index.get(t, UNK) for t in tokens]

    def decode(self, ids):
        return [self.tokens[i] for i in ids]


def build_vocab(records, min_frequency=2, max_size=None):
    """Build a vocabulary from sentences.

    Tokens occurring at least ``min_frequency`` times get ids in order of
    descending frequency, ties broken lexicographically.

    Parameters
    ----------
    records : list of SentenceRecord or str
    min_frequency : int
    max_size : int, optional
        Upper bound on the vocabulary size, specials included.
    """
    records = list(records)
    if not records:
        raise UsageError('Cannot build a vocabulary from an empty corpus')
    counts = collections.Counter()
    for record in records:
        text = record if isinstance(record, str) else record.text
        counts.update(tokenize(text))
    for special in SPECIAL_TOKENS:
        counts.pop(special, None)
    kept = sorted((t for t, c in counts.items() if c >= min_frequency),
                  key=lambda t: (-counts[t], t))
    if max_size is not None:
        kept = kept[:max(0, max_size - len(SPECIAL_TOKENS))]
    _logger.info('Vocabulary of %d tokens (%d distinct, min_frequency=%d)',
                 len(kept) + len(SPECIAL_TOKENS), len(counts), min_frequency)
    return Vocabulary(kept, min_frequency=min_frequency)


def write_vocab(vocab, path):
    with atomic_write(path, 'w', encoding='utf-8') as f:
        for i, token in enumerate(vocab.tokens):
            f.write('{}\t{}\n'.format(i, token))


def read_vocab(path):
    tokens = []
    for lineno, line in read_lines(path):
        line = line.rstrip('\n')
        if not line:
            continue
        number, sep, token = line.partition('\t')
        if not sep or not number.isdigit() or int(number) != len(tokens):
            raise FormatError('Expected "<id>\\t<token>" with id {}'
                              .format(len(tokens)), path=path, line=lineno)
        tokens.append(token)
    if tuple(tokens[:len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
        raise FormatError('Vocabulary must start with the special tokens '
                          '{}'.format(', '.join(SPECIAL_TOKENS)), path=path)
    return Vocabulary(tokens)


def _read_jsonl(path, fields):
    for lineno, line in read_lines(path):
        if not line.strip():
            continue
        try:
            values = json.loads(line)
        except ValueError:
            raise FormatError('Invalid JSON record', path=path, line=lineno)
        if not isinstance(values, dict):
            raise FormatError('Record is not a JSON object', path=path,
                              line=lineno)
        missing = [k for k in fields if k not in values]
        if missing:
            raise FormatError('Record is missing field(s) {}'.format(
                ', '.join(missing)), path=path, line=lineno)
        yield lineno, values


def _write_jsonl(path, rows):
    with atomic_write(path, 'w', encoding='utf-8') as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True, ensure_ascii=False))
            f.write('\n')


def read_documents(path):
    documents = []
    for _, values in _read_jsonl(path, RawDocument._fields):
        documents.append(RawDocument(*(str(values[k])
                                       for k in RawDocument._fields)))
    return documents


def read_records(path):
    records = []
    for lineno, values in _read_jsonl(path, SentenceRecord._fields):
        try:
            index = int(values['index'])
            count = int(values['word_count'])
        except (TypeError, ValueError):
            raise FormatError('index and word_count must be integers',
                              path=path, line=lineno)
        records.append(SentenceRecord(str(values['doc_id']),
                                      str(values['admission_id']), index,
                                      values['text'], count))
    return records


def write_records(records, path):
    _write_jsonl(path, (r._asdict() for r in records))
