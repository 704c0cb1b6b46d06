"""
Training loop: batch sampling from the labeled and unlabeled sets, loss
assembly, SGD with momentum under a polynomial schedule, and the mean
teacher / co-teaching bookkeeping.
"""

from concurrent.futures import ThreadPoolExecutor
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import routeseg
from routeseg.autodiff import Tensor, backward, ohem_cross_entropy, softmax_cross_entropy
from routeseg.data.augment import augment_batch
from routeseg.data.dataset import Sample, stack_batch
from routeseg.jigsaw import PermutationSet, generate_permutation_set, jigsaw_segmentation_loss, ssl_loss
from routeseg.metrics import evaluate
from routeseg.nets import RoutingConfig, RoutingNet, load_net, save_net
from routeseg.nets.checkpoint import split_prefix, with_prefix
from routeseg.seeding import Seeder
from routeseg.semisup import (
    PeerPair,
    TeacherState,
    ct_sup_loss,
    ct_unsup_loss,
    ema_update,
    mt_sup_loss,
    mt_unsup_loss,
    pair_forward,
    sigmoid_rampup,
    teacher_sup_loss,
)
from routeseg.training.config import TrainConfig
from routeseg.types import Seed
from routeseg.training.optim import OptimizerState, poly_lr, step, total_loss
from routeseg.utils.writers import DefaultWriter

logger = routeseg.logger

METRICS_COLUMNS = ("iter", "epoch", "lr", "loss_total", "loss_sup", "loss_ssl", "loss_ssup", "miou_val")


class WrapSampler:
    """
    Endless batches drawn without replacement; the order is reshuffled
    each time the set is exhausted, and a batch may straddle two passes.
    """

    def __init__(self, samples: Sequence[Sample], batch_size: int, rng: np.random.Generator):
        assert len(samples) > 0, "cannot sample from an empty set"
        self.samples = list(samples)
        self.batch_size = batch_size
        self.rng = rng
        self._order = self.rng.permutation(len(self.samples))
        self._position = 0

    def next_batch(self) -> List[Sample]:
        batch = []
        while len(batch) < self.batch_size:
            if self._position == len(self._order):
                self._order = self.rng.permutation(len(self.samples))
                self._position = 0
            batch.append(self.samples[self._order[self._position]])
            self._position += 1
        return batch


class SegmentationTrainer:
    """
    Trains a routing network on a labeled set and an optional unlabeled set.

    Every iteration draws a labeled and an unlabeled batch, computes
    ``lambda0 * L_sup + lambda1 * L_ssl + lambda2 * L_ssup`` for the
    configured strategy, takes one SGD step (one per peer network in
    co-teaching) and, for the mean teacher, updates the teacher's EMA.

    Parameters
    ----------
    labeled : sequence of Sample
        Labeled training set; must not be empty.
    unlabeled : sequence of Sample, optional
        Unlabeled training set (masks are ignored).
    val : sequence of Sample, optional
        Labeled validation set evaluated at the end of every epoch.
    config : TrainConfig, optional
    net_config : RoutingConfig, optional
    seeder : routeseg.seeding.Seeder or int, optional
        Defaults to ``config.seed``.
    output_dir : str or Path, optional
        Receives ``metrics.csv`` and ``checkpoints/``. Nothing is written if None.
    writer_kwargs : dict, optional
        Parameters of the :class:`~routeseg.utils.writers.DefaultWriter`.

    Attributes
    ----------
    net : RoutingNet
        The trained network (the student, or peer a).
    teacher : TeacherState or None
    peers : PeerPair or None
    t : int
        Global iteration counter.
    epoch : int
        Completed epochs.
    """

    name = "routeseg"

    def __init__(
        self,
        labeled: Sequence[Sample],
        unlabeled: Sequence[Sample] = (),
        val: Sequence[Sample] = (),
        config: Optional[TrainConfig] = None,
        net_config: Optional[RoutingConfig] = None,
        seeder: Optional[Seed] = None,
        output_dir=None,
        writer_kwargs: Optional[dict] = None,
    ):
        if len(labeled) == 0:
            raise ValueError("the labeled training set is empty")
        if any(sample.mask is None for sample in labeled):
            raise ValueError("every sample of the labeled set needs a mask")
        self.config = config or TrainConfig()
        self.net_config = net_config or RoutingConfig()
        cfg = self.config

        self.labeled = list(labeled)
        self.unlabeled = list(unlabeled)
        self.val = list(val)
        self.seeder = Seeder(cfg.seed if seeder is None else seeder)
        self._output_dir = Path(output_dir) if output_dir is not None else None

        # one stream per concern, so that switching a term off never shifts another
        (
            init_seeder,
            peer_seeder,
            labeled_seeder,
            unlabeled_seeder,
            augment_seeder,
            jigsaw_seeder,
        ) = self.seeder.spawn(6, squeeze=False)
        self.augment_rng = augment_seeder.rng
        self.view_rng = augment_seeder.spawn(squeeze=True).rng
        self.jigsaw_rng = jigsaw_seeder.rng

        self.net = RoutingNet(self.net_config, seeder=init_seeder)
        logger.info(f"[{self.name}] routing network with {self.net.num_parameters()} parameters.")
        self.optimizer = OptimizerState(self.net.parameters(), cfg.momentum)
        self.strategy = cfg.semisup_strategy
        self.teacher: Optional[TeacherState] = None
        self.peers: Optional[PeerPair] = None
        self.peer_optimizer: Optional[OptimizerState] = None
        if self.strategy == "mean_teacher":
            self.teacher = TeacherState(self.net, cfg.alpha)
        elif self.strategy == "co_teaching":
            self.peers = PeerPair(self.net, RoutingNet(self.net_config, seeder=peer_seeder))
            self.peer_optimizer = OptimizerState(self.peers.net_b.parameters(), cfg.momentum)

        self.permutations: Optional[PermutationSet] = None
        if cfg.uses_jigsaw:
            permutation_seed = int(jigsaw_seeder.spawn(squeeze=True).rng.integers(2**31))
            self.permutations = generate_permutation_set(self.net_config.num_permutations, seed=permutation_seed)

        self.labeled_sampler = WrapSampler(self.labeled, cfg.batch_labeled, labeled_seeder.rng)
        self.unlabeled_sampler: Optional[WrapSampler] = None
        if cfg.uses_unlabeled and self.unlabeled and cfg.batch_unlabeled > 0:
            self.unlabeled_sampler = WrapSampler(self.unlabeled, cfg.batch_unlabeled, unlabeled_seeder.rng)
        elif cfg.uses_unlabeled and self.strategy is not None:
            logger.warning(
                "No unlabeled batch although lambda2 > 0: the semi-supervised term "
                "only uses the labeled images."
            )

        if cfg.iterations_per_epoch is not None:
            self.iterations_per_epoch = cfg.iterations_per_epoch
        elif self.unlabeled_sampler is not None:
            self.iterations_per_epoch = max(len(self.labeled), len(self.unlabeled))
        else:
            self.iterations_per_epoch = len(self.labeled)
        self.total_iterations = max(1, cfg.epochs * self.iterations_per_epoch)

        if cfg.loss == "ohem":
            self.loss_fn = partial(
                ohem_cross_entropy, keep_threshold=cfg.ohem_threshold, min_kept=cfg.ohem_min_kept
            )
        else:
            self.loss_fn = softmax_cross_entropy

        self.t = 0
        self.epoch = 0
        self._records: List[Dict[str, float]] = []
        self._last_batch = None
        self._executor: Optional[ThreadPoolExecutor] = None
        self._writer = DefaultWriter(**(writer_kwargs or dict(name=f"{self.name}_{cfg.method}")))

    @property
    def writer(self) -> DefaultWriter:
        return self._writer

    @property
    def output_dir(self) -> Optional[Path]:
        return self._output_dir

    @property
    def history(self) -> pd.DataFrame:
        """One row per logged iteration; columns as in ``metrics.csv``."""
        return pd.DataFrame(self._records, columns=list(METRICS_COLUMNS))

    #
    # Batches
    #

    def _prepare(self, samples: List[Sample]) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        cfg = self.config
        kwargs = dict(crop_size=cfg.crop_size)
        if not cfg.augment:
            kwargs.update(scale=1.0, flip=False)
        return stack_batch(augment_batch(samples, self.augment_rng, **kwargs))

    def _second_view_flipped(self) -> bool:
        return self.config.independent_augmentation and bool(self.view_rng.random() < 0.5)

    #
    # Losses
    #

    def _ssl_term(self, nets, x_l, y_l, x_u) -> Tensor:
        total = Tensor(0.0)
        for net in nets:
            total = total + ssl_loss(x_l, x_u, net, self.permutations, self.jigsaw_rng)
            if self.config.jigsaw_labels:
                total = total + jigsaw_segmentation_loss(
                    x_l, y_l, net, self.permutations, self.jigsaw_rng, self.loss_fn
                )
        return total

    def _losses(self, x_l, y_l, x_u):
        """Return the lazy (sup, ssl, ssup) terms and the dict their values land in."""
        values: Dict[str, Tensor] = {}

        def lazy(key, fn):
            def run():
                values[key] = fn()
                return values[key]

            return run

        if self.strategy == "co_teaching":
            flip = self._second_view_flipped()
            logits = pair_forward(self.peers, x_l, self._executor, flip)
            nets = (self.peers.net_a, self.peers.net_b)
            sup = lazy("sup", lambda: ct_sup_loss(self.peers, x_l, y_l, self.loss_fn, logits=logits))
            ssup = lazy(
                "ssup",
                lambda: ct_unsup_loss(self.peers, x_l, x_u, self._executor, flip, labeled_logits=logits),
            )
        elif self.strategy == "mean_teacher":
            logits = self.net.forward(Tensor(x_l))
            nets = (self.net,)
            sup = lazy("sup", lambda: mt_sup_loss(self.net, self.teacher, x_l, y_l, self.loss_fn, logits=logits))
            ssup = lazy(
                "ssup",
                lambda: mt_unsup_loss(
                    self.net, self.teacher, x_l, x_u, self._second_view_flipped(), labeled_logits=logits
                ),
            )
        else:
            logits = self.net.forward(Tensor(x_l))
            nets = (self.net,)
            sup = lazy("sup", lambda: self.loss_fn(logits, y_l))
            ssup = None

        ssl = lazy("ssl", lambda: self._ssl_term(nets, x_l, y_l, x_u))
        return sup, ssl, ssup, values

    def lambda2_at(self, t: int) -> float:
        cfg = self.config
        if cfg.rampup_iters == 0:
            return cfg.lambda2
        return cfg.lambda2 * sigmoid_rampup(t, cfg.rampup_iters)

    #
    # Training
    #

    def train_step(self) -> Dict[str, float]:
        """One iteration; returns the record of losses and learning rate."""
        cfg = self.config
        lr = poly_lr(self.t, self.total_iterations, cfg.lr0, cfg.poly_power)
        x_l, y_l = self._prepare(self.labeled_sampler.next_batch())
        self._last_batch = (x_l, y_l)
        x_u = None
        if self.unlabeled_sampler is not None:
            x_u, _ = self._prepare(self.unlabeled_sampler.next_batch())

        self.net.zero_grad()
        if self.peers is not None:
            self.peers.zero_grad()
        sup, ssl, ssup, values = self._losses(x_l, y_l, x_u)
        loss = total_loss(sup, ssl, ssup, cfg.lambda0, cfg.lambda1, self.lambda2_at(self.t))
        backward(loss)

        step(self.optimizer, lr)
        if self.peer_optimizer is not None:
            step(self.peer_optimizer, lr)
        if self.teacher is not None:
            ema_update(self.teacher, self.net, t=self.t, warmup=cfg.ema_warmup)

        record = dict(
            iter=self.t,
            epoch=self.epoch,
            lr=lr,
            loss_total=loss.item(),
            loss_sup=values["sup"].item() if "sup" in values else np.nan,
            loss_ssl=values["ssl"].item() if "ssl" in values else np.nan,
            loss_ssup=values["ssup"].item() if "ssup" in values else np.nan,
            miou_val=np.nan,
        )
        self.t += 1
        return record

    def train_epoch(self) -> Dict[str, float]:
        """Run one epoch; returns the record of its last iteration."""
        cfg = self.config
        record = None
        for ii in range(self.iterations_per_epoch):
            record = self.train_step()
            last = ii == self.iterations_per_epoch - 1
            if last and self.val:
                record["miou_val"] = self.eval()
            if ii % cfg.log_interval == 0 or last:
                self._log(record)
        self.epoch += 1
        logger.info(
            f"[{self.name}] epoch {self.epoch}/{cfg.epochs}: loss {record['loss_total']:.5g}, "
            f"lr {record['lr']:.5g}, val mIoU {record['miou_val']:.4f}"
        )
        return record

    def _log(self, record):
        self._records.append(record)
        scalars = {key: value for key, value in record.items() if key not in ("iter", "epoch")}
        if self.teacher is not None:
            # the teacher is never trained on labels; its loss is only monitored
            x_l, y_l = self._last_batch
            scalars["loss_teacher_sup"] = teacher_sup_loss(self.teacher, x_l, y_l, self.loss_fn)
        scalars = {key: value for key, value in scalars.items() if not np.isnan(value)}
        self.writer.add_scalars(tag_scalar_dict=scalars, global_step=record["iter"])

    def fit(self, budget: Optional[int] = None):
        """
        Train for ``budget`` epochs (default: the epochs left in the config).

        Writes ``metrics.csv`` and, after every epoch,
        ``checkpoints/epoch_<e>.seln`` and ``checkpoints/last.seln``.
        """
        cfg = self.config
        budget = cfg.epochs - self.epoch if budget is None else budget
        self.writer.set_max_global_step(self.t + budget * self.iterations_per_epoch)
        if cfg.threads > 1:
            self._executor = ThreadPoolExecutor(max_workers=cfg.threads)
        try:
            for _ in range(budget):
                self.train_epoch()
                if self.output_dir is not None:
                    self.save(self.output_dir / "checkpoints" / f"epoch_{self.epoch}.seln")
                    self.save(self.output_dir / "checkpoints" / "last.seln")
                    self.write_metrics()
        finally:
            if self._executor is not None:
                self._executor.shutdown()
                self._executor = None
            self.writer.close()
        if self.output_dir is not None:
            self.write_metrics()
        return self

    def eval(self) -> float:
        """Validation mIoU of :attr:`net` (the labeled set is used if there is no validation set)."""
        dataset = self.val or self.labeled
        miou, _ = evaluate(self.net, dataset, threads=self.config.threads)
        return miou

    def write_metrics(self, path=None) -> Path:
        path = Path(path) if path is not None else self.output_dir / "metrics.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        self.history.to_csv(path, index=False, na_rep="", float_format="%.17g")
        return path

    #
    # Checkpoints
    #

    def save(self, path) -> Path:
        """Checkpoint of the network, the teacher or peer, the optimizers and the counters."""
        extra = with_prefix(self.optimizer.state_dict(), "opt/")
        if self.teacher is not None:
            extra.update(with_prefix(self.teacher.net.state_dict(), "teacher/"))
        if self.peers is not None:
            extra.update(with_prefix(self.peers.net_b.state_dict(), "peer/"))
            extra.update(with_prefix(self.peer_optimizer.state_dict(), "peer_opt/"))
        extra["trainer/t"] = np.array(float(self.t))
        extra["trainer/epoch"] = np.array(float(self.epoch))
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        return save_net(path, self.net, extra=extra)

    def resume(self, path):
        """Restore weights, optimizer states and counters saved by :meth:`save`."""
        net, extra = load_net(path)
        if net.config != self.net_config:
            raise ValueError(f"checkpoint network {net.config} does not match {self.net_config}")
        self.net.load_state_dict(net.state_dict())
        self.optimizer.load_state_dict(split_prefix(extra, "opt/"))
        if self.teacher is not None:
            self.teacher.net.load_state_dict(split_prefix(extra, "teacher/"))
        if self.peers is not None:
            self.peers.net_b.load_state_dict(split_prefix(extra, "peer/"))
            self.peer_optimizer.load_state_dict(split_prefix(extra, "peer_opt/"))
        self.t = int(extra["trainer/t"].item())
        self.epoch = int(extra["trainer/epoch"].item())
        self._records = self._previous_records()
        logger.info(f"Resumed from {path} at epoch {self.epoch}, iteration {self.t}.")
        return self

    def _previous_records(self) -> List[Dict[str, float]]:
        """Rows of an existing ``metrics.csv`` logged before iteration :attr:`t`."""
        if self.output_dir is None or not (self.output_dir / "metrics.csv").is_file():
            return []
        previous = pd.read_csv(self.output_dir / "metrics.csv")
        if list(previous.columns) != list(METRICS_COLUMNS):
            logger.warning(f"Ignoring {self.output_dir / 'metrics.csv'}: unexpected columns.")
            return []
        return previous[previous["iter"] < self.t].to_dict("records")

    @classmethod
    def load(cls, path, **kwargs) -> "SegmentationTrainer":
        """Build a trainer from ``kwargs`` and restore the checkpoint ``path``."""
        return cls(**kwargs).resume(path)


def fit(
    config: TrainConfig,
    labeled: Sequence[Sample],
    unlabeled: Sequence[Sample] = (),
    val: Sequence[Sample] = (),
    net_config: Optional[RoutingConfig] = None,
    output_dir=None,
) -> Tuple[RoutingNet, pd.DataFrame]:
    """Train for ``config.epochs`` epochs; returns the trained network and the metrics history."""
    trainer = SegmentationTrainer(
        labeled, unlabeled, val, config=config, net_config=net_config, output_dir=output_dir
    )
    trainer.fit()
    return trainer.net, trainer.history
