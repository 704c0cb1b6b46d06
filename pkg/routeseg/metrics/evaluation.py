from concurrent.futures import ThreadPoolExecutor
from functools import reduce
from operator import add
from typing import Optional, Sequence, Tuple

import routeseg
from routeseg.data.dataset import Sample
from routeseg.metrics.confusion import ConfusionMatrix

logger = routeseg.logger


def _sample_matrix(net, sample: Sample, num_classes: int) -> ConfusionMatrix:
    if sample.mask is None:
        raise ValueError(f"sample {sample.id} has no ground truth to evaluate against")
    pred = net.predict(sample.image[None])[0]
    return ConfusionMatrix(num_classes).update(pred, sample.mask)


def confusion_matrix(net, dataset: Sequence[Sample], threads: Optional[int] = 1) -> ConfusionMatrix:
    """
    Accumulate the argmax predictions of ``net`` over a labeled dataset.

    Single scale, no test-time augmentation. With ``threads > 1`` the
    per-image matrices are computed in a thread pool and summed.
    """
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    num_classes = net.config.num_classes
    if threads is None or threads <= 1:
        matrices = [_sample_matrix(net, sample, num_classes) for sample in dataset]
    else:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            matrices = list(executor.map(lambda s: _sample_matrix(net, s, num_classes), dataset))
    return reduce(add, matrices, ConfusionMatrix(num_classes))


def evaluate(net, dataset: Sequence[Sample], threads: Optional[int] = 1) -> Tuple[float, float]:
    """
    Evaluate a segmentation network.

    Parameters
    ----------
    net : RoutingNet
        Anything with ``predict(images)`` and ``config.num_classes``.
    dataset : sequence of Sample
        Labeled samples.
    threads : int, default: 1

    Returns
    -------
    miou : float
    pixel_accuracy : float
    """
    cm = confusion_matrix(net, dataset, threads)
    miou, accuracy = cm.miou(), cm.pixel_accuracy()
    logger.debug(f"Evaluated {len(dataset)} samples: mIoU {miou:.4f}, pixel accuracy {accuracy:.4f}.")
    return miou, accuracy
