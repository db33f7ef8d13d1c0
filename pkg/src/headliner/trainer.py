"""Optimizers, learning-rate schedule, early stopping, and the train loop.

Defaults follow the training recipe used throughout: Adam with AMSGrad
(lr 0.003, l2 0.001) for selector/compressor, SGD with 0.9 momentum
(lr 0.25) for the language model, up to 50 epochs, stop after three
non-improving validation epochs, halve the learning rate after two.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore


@dataclass
class TrainerConfig:
    optimizer: str = "adam_amsgrad"
    lr: float = 0.003
    l2_weight: float = 0.001
    momentum: float = 0.9
    max_epochs: int = 50
    patience_stop: int = 3
    patience_halve: int = 2
    dropout: float = 0.5
    seed: int = 0
    batch_size: int = 32

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.patience_halve >= self.patience_stop:
            raise ValueError("patience_halve must be smaller than patience_stop")


def _is_bias(name: str) -> bool:
    return name.rsplit(".", 1)[-1].startswith("b")


class Optimizer:
    def __init__(self, store: ParameterStore, lr: float, l2_weight: float = 0.0):
        self.store = store
        self.lr = lr
        self.l2_weight = l2_weight

    def _grad(self, name: str, param) -> np.ndarray:
        g = param.grad
        if self.l2_weight and not _is_bias(name):
            g = g + self.l2_weight * param.value
        return g

    def step(self):
        raise NotImplementedError


class AdamAMSGrad(Optimizer):
    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def __init__(self, store, lr: float = 0.003, l2_weight: float = 0.001):
        super().__init__(store, lr, l2_weight)
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, param in self.store.trainable():
            g = self._grad(name, param)
            m = self.store.slot(name, "m")
            v = self.store.slot(name, "v")
            vmax = self.store.slot(name, "vmax")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            np.maximum(vmax, v, out=vmax)
            param.value -= self.lr * (m / c1) / (np.sqrt(vmax / c2) + self.eps)


class SGDMomentum(Optimizer):
    def __init__(self, store, lr: float = 0.25, momentum: float = 0.9,
                 l2_weight: float = 0.0):
        super().__init__(store, lr, l2_weight)
        self.momentum = momentum

    def step(self):
        for name, param in self.store.trainable():
            vel = self.store.slot(name, "velocity")
            vel *= self.momentum
            vel += self._grad(name, param)
            param.value -= self.lr * vel


class Adagrad(Optimizer):
    """Exposed for CLI completeness; no in-scope model defaults to it."""

    eps = 1e-8

    def __init__(self, store, lr: float = 0.15, accumulator: float = 0.1,
                 l2_weight: float = 0.0):
        super().__init__(store, lr, l2_weight)
        self.accumulator = accumulator

    def step(self):
        for name, param in self.store.trainable():
            acc = self.store.slot(name, "accumulator")
            if not self.store.slots[name].get("_acc_init"):
                acc += self.accumulator
                self.store.slots[name]["_acc_init"] = np.ones(())
            g = self._grad(name, param)
            acc += g * g
            param.value -= self.lr * g / (np.sqrt(acc) + self.eps)


def make_optimizer(store: ParameterStore, config: TrainerConfig) -> Optimizer:
    if config.optimizer == "adam_amsgrad":
        return AdamAMSGrad(store, config.lr, config.l2_weight)
    if config.optimizer == "sgd_momentum":
        return SGDMomentum(store, config.lr, config.momentum, config.l2_weight)
    if config.optimizer == "adagrad":
        return Adagrad(store, config.lr, l2_weight=config.l2_weight)
    raise ValueError(f"unknown optimizer {config.optimizer!r}")


CONTINUE, HALVE_LR, STOP = "continue", "halve_lr", "stop"


def schedule_update(history: list[float], patience_halve: int = 2,
                    patience_stop: int = 3) -> str:
    """Decide after each epoch from the validation-loss history.

    Stop when the last `patience_stop` epochs produced no new strict
    minimum; halve the learning rate every `patience_halve` such epochs.
    """
    if not history:
        raise ValueError("history must be non-empty")
    best = np.inf
    last_improve = 0
    for i, value in enumerate(history):
        if value < best:
            best = value
            last_improve = i
    stale = len(history) - 1 - last_improve
    if stale >= patience_stop:
        return STOP
    if stale > 0 and stale % patience_halve == 0:
        return HALVE_LR
    return CONTINUE


@dataclass
class TrainResult:
    train_losses: list[float] = field(default_factory=list)
    dev_losses: list[float] = field(default_factory=list)
    epochs: int = 0
    stopped_early: bool = False


def train_model(store: ParameterStore, examples: list, loss_fn, config: TrainerConfig,
                dev_examples: list | None = None, dev_loss_fn=None,
                log_path=None, epoch_callback=None) -> TrainResult:
    """Generic mini-batch training loop.

    loss_fn(example, rng) must return a scalar autodiff node; rng is the
    dropout generator in training mode and None at evaluation time.
    Validation uses dev_loss_fn (defaults to loss_fn in eval mode) and
    drives the halve/stop schedule.  A CSV log (epoch, split, loss, lr,
    seconds) is written when log_path is given.
    """
    rng_order = np.random.default_rng(config.seed)
    rng_dropout = np.random.default_rng(config.seed + 1)
    optimizer = make_optimizer(store, config)
    dev_loss_fn = dev_loss_fn or (lambda ex: loss_fn(ex, None).item())
    result = TrainResult()
    log_rows = []
    for epoch in range(1, config.max_epochs + 1):
        start = time.perf_counter()
        order = rng_order.permutation(len(examples))
        epoch_loss = 0.0
        for batch_start in range(0, len(order), config.batch_size):
            batch = order[batch_start:batch_start + config.batch_size]
            store.zero_grads()
            losses = [loss_fn(examples[i], rng_dropout) for i in batch]
            total = losses[0]
            for node in losses[1:]:
                total = ad.add(total, node)
            batch_loss = ad.mul(total, ad.constant(1.0 / len(losses)))
            ad.backward(batch_loss)
            optimizer.step()
            epoch_loss += batch_loss.item() * len(losses)
        epoch_loss /= len(examples)
        result.train_losses.append(epoch_loss)
        elapsed = time.perf_counter() - start
        log_rows.append((epoch, "train", epoch_loss, optimizer.lr, elapsed))

        monitor = epoch_loss
        if dev_examples is not None:
            dev_start = time.perf_counter()
            monitor = float(np.mean([dev_loss_fn(ex) for ex in dev_examples]))
            log_rows.append((epoch, "dev", monitor, optimizer.lr,
                            time.perf_counter() - dev_start))
        result.dev_losses.append(monitor)
        result.epochs = epoch

        if epoch_callback is not None and epoch_callback(epoch, result):
            break
        action = schedule_update(result.dev_losses, config.patience_halve,
                                 config.patience_stop)
        if action == STOP:
            result.stopped_early = True
            break
        if action == HALVE_LR:
            optimizer.lr /= 2.0
    if log_path is not None:
        write_training_log(log_path, log_rows)
    return result


def write_training_log(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "split", "loss", "lr", "seconds"])
        for row in rows:
            writer.writerow(row)
