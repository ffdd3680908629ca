"""
Training, loading and evaluation of person signature models.

A training run writes into its output folder:

    losses.csv         step,l_id,l_triplet,l_center,l_attr,total
    checkpoint.gpsc    every tensor of the model (parameters and buffers)
    config.json        the resolved run parameters
"""
import os
import time
import logging
from collections import namedtuple
from collections import OrderedDict

import numpy as np
import torch

from .callbacks import BudgetFinishedException
from .callbacks import DivergenceException
from .callbacks import StopTrainingException
from .callbacks import TimeBudget
from .callbacks import build_lr_schedule_callback
from .callbacks import get_lr
from .callbacks import set_lr
from .common import ConfigError
from .common import NonFiniteError
from .common import SchemaError
from .common import build_optimizer
from .common import callback_trigger
from .common import get_dtype
from .common import rng
from .config import check_params
from .config import synth_config
from .corrgraph import build_graph
from .corrgraph import block_norms
from .data import batch_spec
from .data import iterate_minibatches
from .data import load_dataset
from .data import make_batch
from .data import make_dataset
from .data import pk_iterator
from .data import split_dataset
from .embeddings import get_embeddings
from .metrics import attribute_accuracy
from .metrics import per_attribute_accuracy
from .model_builders import GPSModel
from .model_builders import ParamStore
from .model_builders import build_model
from .model_builders import schema_hash
from .model_builders import signature
from .objectives import LOSS_TERMS
from .objectives import get_loss
from .objectives import loss_weights
from .objectives import total_loss
from .objectives import update_centers
from .ontology import compute_stats
from .ontology import subset
from .retrieval import evaluate as evaluate_retrieval
from .retrieval import make_report
from .retrieval import signature_set
from .serialization import load_checkpoint
from .serialization import save_checkpoint
from .serialization import write_signatures
from .synthgen import generate
from .utils import mkdir_path
from .utils import read_json
from .utils import write_csv
from .utils import write_json

logging.basicConfig(
    format='%(asctime)s ## %(message)s',
    level=logging.DEBUG,
    datefmt='%m/%d/%Y,%I:%M:%S')
logger = logging.getLogger(__name__)

LOSS_FIELDS = ['step'] + list(LOSS_TERMS) + ['total']
CHECKPOINT = 'checkpoint.gpsc'
CONFIG = 'config.json'
LOSSES = 'losses.csv'

Setup = namedtuple('Setup', ['params', 'dataset', 'split', 'train_annotations', 'graph', 'model', 'store'])


def get_dataset(params):
    """
    the dataset of a run: the `data.dir` directory, or a synthetic
    dataset generated in memory from the `synth` section.
    """
    data = params['data']
    if data['dir'] is not None:
        return load_dataset(data['dir'], schema_path=data['schema'])
    synth = generate(synth_config(params))
    ground_truth = {int(pid) + 1: attrs for pid, attrs in enumerate(synth.identity_attributes)}
    return make_dataset(synth.annotations, synth.attachment, synth.features, synth.masks, ground_truth)


def setup(params, dataset=None):
    """
    build everything a run needs from resolved params: dataset, split,
    correlation graph of the training labels and the initialized model.
    """
    dataset = get_dataset(params) if dataset is None else dataset
    split = split_dataset(dataset.annotations, params['data']['test_images_per_identity'])
    train_annotations = subset(dataset.annotations, split.train)
    stats = compute_stats(train_annotations)
    graph = build_graph(stats, dataset.attachment, params['model']['degree'])
    logger.info('Correlation graph : N_G = {}, block norms : {}'.format(
        len(graph.M), ', '.join('{}={:.4f}'.format(k, v) for k, v in block_norms(graph).items())))
    embeddings = get_embeddings(
        dataset.attachment.attribute_names, params['model']['embedding_dim'],
        path=params['data']['embeddings'])
    model = build_model(
        params['model'], graph.normalized, embeddings,
        n_parts=len(dataset.attachment.part_names),
        n_identities=train_annotations.nb_identities,
        feature_dim=dataset.features.shape[-1],
        seed=params['seed'])
    store = ParamStore(model, schema_hash(dataset.attachment))
    for name in params['optim']['freeze']:
        store.freeze(name)
    return Setup(params=params, dataset=dataset, split=split, train_annotations=train_annotations,
                 graph=graph, model=model, store=store)


def compute_losses(model, batch, weights, loss_params, update_stats=True, trace=None):
    """
    forward pass and the four loss terms on a batch.

    Returns
    -------

    tuple (ordered dict of scalar tensors l_id, l_triplet, l_center,
    l_attr and total, GPSOutputs)
    """
    outputs = model(batch.features, batch.masks, update_stats=update_stats, trace=trace)
    triplet = get_loss({'name': 'triplet',
                        'params': {'margin': loss_params['margin'], 'mining': loss_params['mining']}})
    losses = OrderedDict([
        ('l_id', get_loss('identity')(outputs.id_scores, batch.identities)),
        ('l_triplet', triplet(outputs.metric_embedding, batch.identities)),
        ('l_center', get_loss('center')(outputs.metric_embedding, batch.identities, model.centers)),
        ('l_attr', get_loss('attribute')(outputs.attr_logits, batch.labels)),
    ])
    losses['total'] = total_loss(losses, weights)
    return losses, outputs


def first_non_finite(losses):
    """name of the first non-finite loss term, None if all are finite"""
    for name, value in losses.items():
        if not bool(torch.isfinite(value)):
            return name
    return None


def forward_backward(model, batch, weights, loss_params, update_stats=True):
    """
    losses and exact gradients of the total loss with respect to every
    trainable parameter. The correlation matrix and the centers are
    buffers and receive no gradient.

    Returns
    -------

    tuple (ordered dict name -> float, ordered dict name -> gradient tensor)
    """
    losses, _ = compute_losses(model, batch, weights, loss_params, update_stats=update_stats)
    term = first_non_finite(losses)
    if term is not None:
        raise NonFiniteError('loss term {} is not finite'.format(term))
    named = [(name, p) for name, p in model.named_parameters() if p.requires_grad]
    grads = torch.autograd.grad(losses['total'], [p for _, p in named], allow_unused=True)
    gradients = OrderedDict(
        (name, torch.zeros_like(p) if g is None else g) for (name, p), g in zip(named, grads))
    return OrderedDict((k, v.item()) for k, v in losses.items()), gradients


def train(params, outdir, dataset=None, custom_callbacks=[], logger=logger):
    """
    train a model and write losses.csv, checkpoint.gpsc and config.json
    into `outdir`.

    Parameters
    ----------

    params : dict
        run parameters, merged over the defaults
    outdir : str
    dataset : Dataset or None
        overrides the dataset described by `params`

    Returns
    -------

    ParamStore of the trained model
    """
    params = check_params(params)
    torch.use_deterministic_algorithms(True)
    run = setup(params, dataset=dataset)
    model, store = run.model, run.store
    optim = params['optim']
    weights = loss_weights(**params['loss']['weights'])
    dtype = get_dtype(params['model']['dtype'])
    if len(store.trainable_names()) == 0:
        raise ConfigError('optim.freeze : every parameter is frozen, nothing to train')
    optimizer = build_optimizer(optim['algo']['name'], optim['algo']['params'],
                                store.param_groups(optim['lr_multipliers']))
    set_lr(optimizer, get_lr(optimizer))
    store.describe()

    spec = batch_spec(optim['P'], optim['K'])
    batches = pk_iterator(run.train_annotations.identities, spec, rng(params['seed'], 'train.batches'))

    lr_schedule = build_lr_schedule_callback(
        optim['lr_schedule']['name'], optim['lr_schedule']['params'], print_func=logger.debug)
    budget = optim['budget_secs']
    callbacks = [lr_schedule] + list(custom_callbacks)
    if budget is not None:
        callbacks.append(TimeBudget(budget_secs=budget))
    for cb in callbacks:
        cb.model = model
        cb.optimizer = optimizer
        cb.params = params

    mkdir_path(outdir)
    log_every = params['report']['log_every']
    history = []
    model.train()
    callback_trigger(callbacks, 'on_train_begin')
    t0 = time.time()
    for step in range(1, optim['steps'] + 1):
        indices = next(batches)
        batch = make_batch(run.dataset, run.split.train[indices],
                           run.train_annotations.identities[indices], dtype=dtype)
        logs = {}
        callback_trigger(callbacks, 'on_step_begin', step, logs=logs)
        optimizer.zero_grad()
        losses, outputs = compute_losses(model, batch, weights, params['loss'])
        term = first_non_finite(losses)
        if term is not None:
            raise DivergenceException(step, term)
        losses['total'].backward()
        optimizer.step()
        if weights.center > 0:
            update_centers(outputs.metric_embedding.detach(), batch.identities, model.centers,
                           lr=params['loss']['center_lr'])
        row = OrderedDict([('step', step)] + [(k, v.item()) for k, v in losses.items()])
        history.append(row)
        message = 'step {:05d} '.format(step) + ' '.join('{}={:.6f}'.format(k, row[k]) for k in LOSS_FIELDS[1:])
        message += ' lr={}'.format(get_lr(optimizer))
        if step % log_every == 0 or step == 1:
            logger.info(message)
        else:
            logger.debug(message)
        try:
            callback_trigger(callbacks, 'on_step_end', step, logs=logs)
        except BudgetFinishedException:
            logger.info('Budget finished. Stop training.')
            break
        except StopTrainingException:
            logger.info('Stop training.')
            break
    callback_trigger(callbacks, 'on_train_end')
    logger.info('Trained {} steps in {:.3f}s'.format(len(history), time.time() - t0))

    write_csv(history, os.path.join(outdir, LOSSES), fieldnames=LOSS_FIELDS)
    save_checkpoint(os.path.join(outdir, CHECKPOINT), store.state(), store.schema_hash)
    write_json(params, os.path.join(outdir, CONFIG))
    logger.info('Saved checkpoint and losses into {}'.format(outdir))
    return store


def load(folder, attachment=None):
    """
    rebuild a trained model from the files of a training run.

    Parameters
    ----------

    folder : str
    attachment : AttachmentTable or None
        when given, its schema hash must match the checkpoint's

    Returns
    -------

    tuple (ParamStore, params)
    """
    params = check_params(read_json(os.path.join(folder, CONFIG)))
    tensors, digest = load_checkpoint(os.path.join(folder, CHECKPOINT))
    if attachment is not None and schema_hash(attachment) != digest:
        raise SchemaError('the checkpoint of {} was trained with another attribute schema'.format(folder))
    n_attributes, embedding_dim = tensors['Z'].shape
    n_nodes = tensors['M_hat'].shape[0]
    n_identities, signature_dim = tensors['centers'].shape
    model_params = params['model']
    model = GPSModel(
        tensors['M_hat'], tensors['Z'],
        n_parts=n_nodes - n_attributes,
        n_identities=n_identities,
        feature_dim=signature_dim // 2,
        hidden_dims=model_params['hidden_dims'],
        slope=model_params['slope'],
        bnneck=model_params['bnneck'],
        shared_projection=model_params['shared_projection'],
        train_embeddings=model_params['train_embeddings'],
        identity_bias=model_params['identity_bias'],
        metric_feature=model_params['metric_feature'],
        dtype=get_dtype(model_params['dtype']))
    store = ParamStore(model, digest)
    store.load_state(tensors)
    return store, params


def predict(model, dataset, indices, feature='concat', batch_size=64):
    """
    eval-mode forward pass over the images `indices`, in chunks of
    `batch_size`.

    Returns
    -------

    tuple (signatures (n, d), attribute logits (n, N_A)) as float64 arrays
    """
    model.eval()
    indices = np.asarray(indices, dtype=np.int64)
    signatures, logits = [], []
    with torch.no_grad():
        for excerpt in iterate_minibatches(len(indices), batch_size):
            chunk = indices[excerpt]
            batch = make_batch(dataset, chunk, np.zeros(len(chunk)), dtype=model.dtype)
            outputs = model(batch.features, batch.masks)
            signatures.append(signature(outputs, feature).double().numpy())
            logits.append(outputs.attr_logits.double().numpy())
    if len(indices) == 0:
        dim = model.feature_dim * (2 if feature == 'concat' else 1)
        return np.zeros((0, dim)), np.zeros((0, model.n_attributes))
    return np.concatenate(signatures), np.concatenate(logits)


def extract_signatures(model, dataset, indices, feature='concat', batch_size=64):
    """SignatureSet of the images `indices` (identities are the original ones)"""
    vectors, _ = predict(model, dataset, indices, feature=feature, batch_size=batch_size)
    annotations = dataset.annotations
    return signature_set(vectors, annotations.original_identities[indices], annotations.cameras[indices])


def attribute_targets(dataset, indices):
    """ground truth attributes of the images when known, else their labels"""
    annotations = dataset.annotations
    if dataset.ground_truth is None:
        return annotations.labels[indices]
    return np.array([dataset.ground_truth[int(pid)] for pid in annotations.original_identities[indices]])


def target_dataset(folder, store, params, dataset=None):
    """
    the dataset a trained run is evaluated on: `dataset` when given (for
    instance another dataset with the same schema), else the dataset of
    the run. Raises SchemaError when its schema differs from the
    checkpoint's.
    """
    dataset = get_dataset(params) if dataset is None else dataset
    if schema_hash(dataset.attachment) != store.schema_hash:
        raise SchemaError('the checkpoint of {} was trained with another attribute schema'.format(folder))
    return dataset


def evaluate(folder, dataset=None, feature=None, distance=None):
    """
    evaluate a trained run on the held-out split of its dataset, or of
    `dataset`, a dataset with the same schema the model was not trained on.

    Returns
    -------

    report dict (see retrieval.make_report) with the attribute recognition
    accuracy on the held-out images
    """
    store, params = load(folder)
    feature = feature or params['eval']['feature']
    distance = distance or params['eval']['distance']
    dataset = target_dataset(folder, store, params, dataset)
    model = store.model
    split = split_dataset(dataset.annotations, params['data']['test_images_per_identity'])
    batch_size = params['eval']['batch_size']
    logger.info('Evaluating with feature "{}" and {} distance'.format(feature, distance))
    queries = extract_signatures(model, dataset, split.query, feature, batch_size)
    gallery = extract_signatures(model, dataset, split.gallery, feature, batch_size)
    run = evaluate_retrieval(queries, gallery, distance=distance)

    held_out = np.concatenate([split.query, split.gallery])
    _, logits = predict(model, dataset, held_out, feature, batch_size)
    predicted = (logits > 0).astype(np.int64)
    targets = attribute_targets(dataset, held_out)
    accuracy = attribute_accuracy(targets, predicted)
    report = make_report(run, feature, distance, extra=OrderedDict([
        ('attribute_accuracy', accuracy),
        ('attribute_target', 'ground_truth' if dataset.ground_truth is not None else 'labels'),
        ('per_attribute_accuracy', OrderedDict(zip(dataset.attachment.attribute_names,
                                                   per_attribute_accuracy(targets, predicted).tolist()))),
    ]))
    logger.info('mAP={:.4f} R1={:.4f} R5={:.4f} R10={:.4f} attribute accuracy={:.4f}'.format(
        run.mAP, run.R1, run.R5, run.R10, accuracy))
    return report


def export(folder, outdir, dataset=None, feature=None):
    """
    write the query and gallery signatures of a trained run as
    query.gpss and gallery.gpss

    Returns
    -------

    list of written filenames
    """
    store, params = load(folder)
    feature = feature or params['eval']['feature']
    dataset = target_dataset(folder, store, params, dataset)
    split = split_dataset(dataset.annotations, params['data']['test_images_per_identity'])
    mkdir_path(outdir)
    filenames = []
    for name, indices in (('query', split.query), ('gallery', split.gallery)):
        signatures = extract_signatures(store.model, dataset, indices, feature, params['eval']['batch_size'])
        filename = os.path.join(outdir, name + '.gpss')
        write_signatures(filename, signatures)
        filenames.append(filename)
    return filenames
