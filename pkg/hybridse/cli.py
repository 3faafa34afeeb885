"""
Command-line interface for the hybrid embedding pipeline.

Every command writes its artifacts into ``--out-dir`` (default: the current
directory), which is locked for the duration of the run. Artifacts are
staged in a hidden directory and moved into place only when the command
succeeds, together with ``config.json``: the effective configuration with
values resolved from the inputs (such as ``encoder.vocab_size``), so that
rerunning with ``--config config.json`` reproduces the run. Settings come
from an optional JSON configuration file (``--config``); flags override it.

Exit codes: 0 success, 1 runtime error, 2 usage error, 3 format error.
Errors are reported as a single line on standard error::

    hybridse: <ErrorClass>: <message>

A full synthetic run::

    hybridse gen-synthetic --n-sentences 1000 --out-dir run
    hybridse train-simcse --records run/records.jsonl --vocab run/vocab.tsv \
        --out-dir run
    hybridse train-tsdae --records run/records.jsonl --vocab run/vocab.tsv \
        --out-dir run
    hybridse embed --model run/simcse.ckpt ... --out-dir run
    hybridse embed --model run/tsdae.ckpt ... --out-dir run
    hybridse concat --first run/simcse.embd --second run/tsdae.embd \
        --out-dir run
    hybridse eval-cluster --store run/simcse+tsdae.embd \
        --labels run/labels.tsv --out-dir run
"""
import argparse
import os
import shutil
import sys
import tempfile

from hybridse import __version__
from hybridse.benchmark import ClusterTask, compare, format_report, \
    RetrievalTask, StsTask
from hybridse.config import PipelineConfig
from hybridse.corpus import build_vocab, preprocess_corpus, read_documents, \
    read_records, read_vocab, SPECIAL_TOKENS, Vocabulary, write_records, \
    write_vocab
from hybridse.encoder import embed_sentences, EncoderEmbedder, \
    EncoderModel, load_encoder, save_encoder
from hybridse.errors import ConfigurationError, FormatError, HybridSEError, \
    UsageError
from hybridse.export import export, formats as export_formats
from hybridse.logging import get_logger
from hybridse.predict import build_admission_dataset, cross_validate, \
    KINDS, read_admission_labels, read_dataset, write_dataset
from hybridse.store import concat_embeddings, EmbeddingStore, \
    HybridEmbedder, read_store, write_store
from hybridse.synthetic import generate_synthetic_corpus, \
    make_admission_dataset, read_topic_labels, write_synthetic_corpus
from hybridse.trainer import SimcseTrainer, TsdaeTrainer
from hybridse.trainer.tsdae import save_tsdae
from hybridse.util import atomic_write, RunLock

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_FORMAT = 3

CONFIG_NAME = 'config.json'

# argument destinations that are not configuration keys
_CLI_ONLY = frozenset(['command', 'config', 'out_dir', 'verbose', 'handler'])


def exit_code(error):
    """Exit status for an exception raised by a command"""
    if isinstance(error, FormatError):
        return EXIT_FORMAT
    if isinstance(error, (UsageError, ConfigurationError)):
        return EXIT_USAGE
    return EXIT_RUNTIME


class Run(object):
    """State shared by one command invocation.

    Parameters
    ----------
    args : argparse.Namespace
    config : PipelineConfig
        Effective configuration (file values with flag overrides).
    work_dir : str
        Staging directory inside ``args.out_dir`` for this run's artifacts.
    """
    def __init__(self, args, config, work_dir):
        self.args = args
        self.config = config
        self.out_dir = args.out_dir
        self.work_dir = work_dir
        self.logger = get_logger(__name__, run_name=args.command,
                                 log_level=args.verbose or None)

    def output(self, name):
        """Staged path of artifact ``name``; see :meth:`publish`"""
        return os.path.join(self.work_dir, name)

    def resolve(self, **overrides):
        """Record settings the command resolved from its inputs"""
        self.config = self.config.merged(overrides)

    def publish(self):
        """Move every staged artifact into the output directory"""
        names = sorted(os.listdir(self.work_dir))
        for name in names:
            os.replace(os.path.join(self.work_dir, name),
                       os.path.join(self.out_dir, name))
        self.logger.info('Wrote %s', ', '.join(names))

    def input(self, key, required=True):
        """Input path from ``paths.<key>``; must exist"""
        path = self.config.path(key)
        if path is None:
            if required:
                raise UsageError('Missing input: --{}'.format(
                    key.replace('_', '-')))
            return None
        paths = path if isinstance(path, list) else [path]
        for p in paths:
            if not os.path.exists(p):
                raise UsageError('Input file not found: {}'.format(p))
        return path

    def write_text(self, name, text):
        path = self.output(name)
        with atomic_write(path, 'w', encoding='utf-8') as f:
            f.write(text)
        return path


def _stem(path):
    return os.path.splitext(os.path.basename(path))[0]


def _vocab_and_records(run):
    return read_vocab(run.input('vocab')), read_records(run.input('records'))


def _starting_encoder(run, vocab):
    init = run.input('init', required=False)
    if init is not None:
        model = load_encoder(init)
        if model.config.vocab_size < len(vocab):
            raise ConfigurationError(
                'Encoder {} has {} token embeddings but the vocabulary has '
                '{} tokens'.format(init, model.config.vocab_size, len(vocab)))
        run.resolve(encoder=model.config.as_dict())
        return model
    if not run.config.encoder.is_explicit('vocab_size'):
        run.resolve(**{'encoder.vocab_size': len(vocab)})
    elif run.config.encoder.vocab_size < len(vocab):
        raise ConfigurationError('encoder.vocab_size ({}) is smaller than '
                                 'the vocabulary ({})'.format(
                                     run.config.encoder.vocab_size,
                                     len(vocab)))
    model = EncoderModel(run.config.encoder, seed=run.config.seed)
    save_encoder(model, run.output('base.ckpt'))
    return model


def cmd_prep(run):
    documents = read_documents(run.input('documents'))
    records = preprocess_corpus(documents,
                                num_processors=run.config.num_processors)
    write_records(records, run.output('records.jsonl'))
    if records:
        vocab = build_vocab(records, min_frequency=run.config.min_frequency)
    else:
        run.logger.warning('No sentences survived preprocessing')
        vocab = Vocabulary(SPECIAL_TOKENS)
    write_vocab(vocab, run.output('vocab.tsv'))


def cmd_gen_synthetic(run):
    args = run.args
    corpus = generate_synthetic_corpus(args.n_sentences, args.n_topics,
                                       seed=run.config.seed)
    write_synthetic_corpus(corpus, run.output('records.jsonl'),
                           run.output('labels.tsv'))
    write_vocab(build_vocab(corpus.records,
                            min_frequency=run.config.min_frequency),
                run.output('vocab.tsv'))
    if args.admissions:
        dataset = make_admission_dataset(args.admissions, kind=args.kind,
                                         seed=run.config.seed)
        write_dataset(dataset, run.output('dataset.tsv'))


def _train(run, trainer_class, section):
    vocab, records = _vocab_and_records(run)
    model = _starting_encoder(run, vocab)
    trainer = trainer_class(model, getattr(run.config, section),
                            verbose=run.args.verbose,
                            run_name=run.args.command)
    result = trainer.train_corpus(records, vocab)
    result.save_trace(run.output('{}_loss.tsv'.format(section)))
    return result


def cmd_train_simcse(run):
    result = _train(run, SimcseTrainer, 'simcse')
    save_encoder(result.model, run.output('simcse.ckpt'))


def cmd_train_tsdae(run):
    result = _train(run, TsdaeTrainer, 'tsdae')
    save_tsdae(result.model, result.decoder, run.output('tsdae.ckpt'))


def cmd_embed(run):
    model_path = run.input('model')
    vocab, records = _vocab_and_records(run)
    name = run.args.name or _stem(model_path)
    store = embed_sentences(load_encoder(model_path), vocab, records,
                            name=name)
    write_store(store, run.output(name + '.embd'))


def cmd_concat(run):
    first = read_store(run.input('first'))
    second = read_store(run.input('second'))
    hybrid = concat_embeddings(first, second,
                               normalize=run.config.normalize,
                               name=run.args.name)
    write_store(hybrid, run.output(hybrid.name + '.embd'))


def _embedders(run):
    """One embedder per ``--model``; two models add their hybrid"""
    model_paths = run.input('models')
    if not 1 <= len(model_paths) <= 2:
        raise UsageError('Pass one or two --model checkpoints')
    vocab = read_vocab(run.input('vocab'))
    embedders = {}
    for path in model_paths:
        name = _stem(path)
        if name in embedders:
            raise UsageError('Two models named "{}"'.format(name))
        embedders[name] = EncoderEmbedder(load_encoder(path), vocab,
                                          name=name)
    if len(embedders) == 2:
        hybrid = HybridEmbedder(*embedders.values(),
                                normalize=run.config.normalize)
        embedders[hybrid.name] = hybrid
    return embedders


def _report(run, kind, tasks):
    table = compare(_embedders(run), tasks, seed=run.config.seed)
    report = format_report(table)
    run.write_text('{}_report.tsv'.format(kind), report)
    sys.stdout.write(report)


def cmd_eval_sts(run):
    _report(run, 'sts', [StsTask.from_file(run.input('task'),
                                           name=_stem(run.input('task')))])


def _store_cluster_task(run):
    """Cluster precomputed stores against a record-id label sidecar"""
    labels = read_topic_labels(run.input('labels'))
    record_ids = list(labels)
    task = ClusterTask(_stem(run.input('labels')),
                       [(rid, labels[rid]) for rid in record_ids],
                       n_runs=run.args.n_runs)
    item_ids = [ClusterTask.item_id(i) for i in range(len(record_ids))]
    rows = []
    for path in run.input('stores'):
        store = read_store(path)
        relabeled = EmbeddingStore(store.name, item_ids,
                                   store.rows(record_ids))
        rows.append((store.name, task.score(relabeled,
                                            seed=run.config.seed)))
    return task, rows


def cmd_eval_cluster(run):
    if run.config.path('stores'):
        task, rows = _store_cluster_task(run)
        report = ''.join('{}/{}\t{}\t{:.2f}\n'.format(name, task.name,
                                                      task.metric, score)
                         for name, score in rows)
        run.write_text('cluster_report.tsv', report)
        sys.stdout.write(report)
        return
    path = run.input('task')
    _report(run, 'cluster', [ClusterTask.from_file(
        path, name=_stem(path), n_runs=run.args.n_runs)])


def cmd_eval_retrieval(run):
    queries = run.input('queries')
    _report(run, 'retrieval', [RetrievalTask.from_files(
        queries, run.input('corpus'), run.input('qrels'),
        name=_stem(queries))])


def cmd_cv_predict(run):
    dataset_path = run.input('dataset', required=False)
    if dataset_path is not None:
        dataset = read_dataset(dataset_path)
    else:
        if run.args.kind is None:
            raise UsageError('--kind is required without --dataset')
        dataset = build_admission_dataset(
            read_store(run.input('store')), read_records(run.input('records')),
            read_admission_labels(run.input('admission_labels')),
            run.args.kind)
    result = cross_validate(dataset, kind=run.args.kind,
                            config=run.config.heads,
                            num_processors=run.config.num_processors)
    result.write(run.work_dir)
    sys.stdout.write(result.format_summary())


def cmd_export_embeddings(run):
    path = run.input('store')
    fmt = run.args.format
    run.write_text('{}.{}'.format(_stem(path), fmt),
                   export(read_store(path), fmt))


def build_parser():
    parser = argparse.ArgumentParser(
        prog='hybridse',
        description='Hybrid SimCSE + TSDAE sentence embedding pipeline')
    parser.add_argument('--version', action='version',
                        version='%(prog)s ' + __version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON configuration file')
    common.add_argument('--out-dir', default='.',
                        help='directory for every artifact (locked)')
    common.add_argument('--seed', type=int, dest='seed')
    common.add_argument('-v', '--verbose', action='store_true')
    commands = parser.add_subparsers(dest='command', metavar='command')
    commands.required = True

    def command(name, handler, summary):
        sub = commands.add_parser(name, parents=[common], help=summary)
        sub.set_defaults(handler=handler)
        return sub

    def path(sub, flag, key, **kwargs):
        sub.add_argument(flag, dest='paths.' + key, **kwargs)

    def training_flags(sub, section):
        path(sub, '--records', 'records')
        path(sub, '--vocab', 'vocab')
        path(sub, '--init', 'init', help='starting encoder checkpoint')
        sub.add_argument('--steps', type=int, dest=section + '.steps')
        sub.add_argument('--batch-size', type=int,
                         dest=section + '.batch_size')
        sub.add_argument('--lr', type=float, dest=section + '.lr')
        sub.add_argument('--d-model', type=int, dest='encoder.d_model')
        sub.add_argument('--n-layers', type=int, dest='encoder.n_layers')
        sub.add_argument('--dropout-rate', type=float,
                         dest='encoder.dropout_rate')

    sub = command('prep', cmd_prep, 'clean, segment and filter notes')
    path(sub, '--documents', 'documents')
    sub.add_argument('--min-frequency', type=int, dest='min_frequency')
    sub.add_argument('--num-processors', type=int, dest='num_processors')

    sub = command('gen-synthetic', cmd_gen_synthetic,
                  'write a synthetic labeled corpus')
    sub.add_argument('--n-sentences', type=int, default=1000)
    sub.add_argument('--n-topics', type=int, default=2)
    sub.add_argument('--admissions', type=int, default=0,
                     help='also write a synthetic admission dataset')
    sub.add_argument('--kind', choices=KINDS, default=KINDS[0])
    sub.add_argument('--min-frequency', type=int, dest='min_frequency')

    sub = command('train-simcse', cmd_train_simcse,
                  'contrastive fine-tuning')
    training_flags(sub, 'simcse')
    sub.add_argument('--temperature', type=float, dest='simcse.temperature')

    sub = command('train-tsdae', cmd_train_tsdae, 'denoising fine-tuning')
    training_flags(sub, 'tsdae')
    sub.add_argument('--deletion-ratio', type=float,
                     dest='tsdae.deletion_ratio')

    sub = command('embed', cmd_embed, 'embed every sentence record')
    path(sub, '--model', 'model')
    path(sub, '--vocab', 'vocab')
    path(sub, '--records', 'records')
    sub.add_argument('--name')

    sub = command('concat', cmd_concat, 'build a hybrid embedding store')
    path(sub, '--first', 'first')
    path(sub, '--second', 'second')
    sub.add_argument('--no-normalize', action='store_false',
                     dest='normalize', default=None)
    sub.add_argument('--name')

    for name, handler, summary in (
            ('eval-sts', cmd_eval_sts, 'semantic similarity benchmark'),
            ('eval-cluster', cmd_eval_cluster, 'clustering benchmark'),
            ('eval-retrieval', cmd_eval_retrieval, 'retrieval benchmark')):
        sub = command(name, handler, summary)
        path(sub, '--model', 'models', action='append')
        path(sub, '--vocab', 'vocab')
        sub.add_argument('--no-normalize', action='store_false',
                         dest='normalize', default=None)
        if name == 'eval-retrieval':
            path(sub, '--queries', 'queries')
            path(sub, '--corpus', 'corpus')
            path(sub, '--qrels', 'qrels')
        else:
            path(sub, '--task', 'task')
        if name == 'eval-cluster':
            path(sub, '--store', 'stores', action='append')
            path(sub, '--labels', 'labels')
            sub.add_argument('--n-runs', type=int, default=1)

    sub = command('cv-predict', cmd_cv_predict,
                  'cross-validated admission prediction')
    path(sub, '--dataset', 'dataset')
    path(sub, '--store', 'store')
    path(sub, '--records', 'records')
    path(sub, '--admission-labels', 'admission_labels')
    sub.add_argument('--kind', choices=KINDS)
    sub.add_argument('--folds', type=int, dest='heads.folds')
    sub.add_argument('--epochs', type=int, dest='heads.epochs')
    sub.add_argument('--num-processors', type=int, dest='num_processors')

    sub = command('export-embeddings', cmd_export_embeddings,
                  'write a store as text')
    path(sub, '--store', 'store')
    sub.add_argument('--format', choices=sorted(export_formats),
                     default='tsv')
    return parser


def load_config(args):
    """Configuration file (if any) with flag overrides applied"""
    if args.config:
        try:
            with open(args.config, encoding='utf-8') as f:
                config = PipelineConfig.from_json(f.read())
        except OSError as e:
            raise UsageError('Cannot read configuration {}: {}'.format(
                args.config, e.strerror))
        except UnicodeDecodeError as e:
            raise FormatError('Configuration is not valid UTF-8 (byte {})'
                              .format(e.start), path=args.config)
    else:
        config = PipelineConfig()
    overrides = {key: value for key, value in vars(args).items()
                 if key not in _CLI_ONLY and
                 ('.' in key or key in PipelineConfig._defaults)}
    return config.merged(overrides)


def run(argv=None):
    """Parse ``argv`` and execute the command; returns the exit status"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if not e.code else EXIT_USAGE
    try:
        config = load_config(args)
        with RunLock(args.out_dir):
            # artifacts appear in out_dir only if the whole command succeeds
            work_dir = tempfile.mkdtemp(prefix='.staging-', dir=args.out_dir)
            try:
                state = Run(args, config, work_dir)
                state.logger.info('Starting with seed %d', config.seed)
                args.handler(state)
                state.write_text(CONFIG_NAME, state.config.to_json())
                state.publish()
                state.logger.info('Finished')
            finally:
                shutil.rmtree(work_dir, ignore_errors=True)
    except HybridSEError as e:
        sys.stderr.write('hybridse: {}: {}\n'.format(
            e.__class__.__name__, ' '.join(str(e).split())))
        return exit_code(e)
    except UnicodeDecodeError as e:
        sys.stderr.write('hybridse: FormatError: {}\n'.format(e))
        return EXIT_FORMAT
    except (OSError, MemoryError) as e:
        sys.stderr.write('hybridse: {}: {}\n'.format(
            e.__class__.__name__, ' '.join(str(e).split())))
        return EXIT_RUNTIME
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == '__main__':
    main()
