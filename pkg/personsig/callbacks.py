"""
This module contains a list of callback classes and some
helpers used commonly in the training loop.

Callbacks are triggered per optimizer step (see `common.callback_trigger`).
The training loop sets `model`, `optimizer` and `params` on each callback
before `on_train_begin`.
"""
import time
import logging

import numpy as np

logger = logging.getLogger(__name__)


class StopTrainingException(Exception):
    pass


class BudgetFinishedException(Exception):
    pass


class DivergenceException(Exception):
    """raised when a loss term becomes non-finite during training"""

    def __init__(self, step, term):
        self.step = step
        self.term = term
        super(DivergenceException, self).__init__(
            'training diverged at step {}: {} is not finite'.format(step, term))


class Callback(object):

    def on_train_begin(self, logs={}):
        pass

    def on_train_end(self, logs={}):
        pass

    def on_step_begin(self, step, logs={}):
        pass

    def on_step_end(self, step, logs={}):
        pass


class LearningRateScheduler(Callback):
    """
    Callback for learning rate scheduling

    Parameters:
    -----------

    name: str
        type of learning rate schedule
        available are :
            - 'constant'
            - 'decrease_every'
            - 'manual'
    params: dict
        parameters of learning rate schedule.

    print_func: callable(default=logger.info)
        function to report changes in learning rate

    `constant`:
        a constant learning rate schedule.
        no parameters are needed

    `decrease_every`:
        divide the learning rate by `shrink_factor` every `every` steps

        Parameters
            shrink_factor: float
            every: int

    `manual`:
        Parameters
            schedule : list of dicts with keys `range` (first and last
            step, included) and `lr`.
    """

    def __init__(self, name='constant', params=None, print_func=logger.info):
        self.schedule_params = params if params else {}
        self.name = name
        self.print_func = print_func

    def on_step_end(self, step, logs={}):
        params = self.schedule_params
        old_lr = get_lr(self.optimizer)
        if self.name == 'constant':
            new_lr = lr_schedule_constant(old_lr)
        elif self.name == 'decrease_every':
            new_lr = lr_schedule_decrease_every(
                old_lr,
                every=params['every'],
                shrink_factor=params['shrink_factor'],
                step=step)
        elif self.name == 'manual':
            new_lr = lr_schedule_manual(old_lr, schedule=params['schedule'], step=step)
        else:
            raise ValueError('Unknown lr schedule : {}'.format(self.name))
        min_lr = params.get('min_lr', 0)
        new_lr = max(new_lr, min_lr) if old_lr > 0 else new_lr
        if not np.isclose(new_lr, old_lr):
            self.print_func('prev learning rate : {}, new learning rate : {}'.format(old_lr, new_lr))
        set_lr(self.optimizer, new_lr)
        logs['lr'] = new_lr


def get_lr(optimizer):
    """base learning rate, before the multiplier of the parameter group"""
    group = optimizer.param_groups[0]
    return group.get('base_lr', group['lr'])


def set_lr(optimizer, lr):
    """set the base learning rate, each group gets it times its `lr_mult`"""
    for group in optimizer.param_groups:
        group['base_lr'] = lr
        group['lr'] = lr * group.get('lr_mult', 1.)


def lr_schedule_constant(old_lr):
    return old_lr


def lr_schedule_decrease_every(old_lr, every, shrink_factor, step):
    """
    divide the learning rate by `shrink_factor` periodically

    Parameters
    ----------
        shrink_factor: float
            divide the `learning_rate` by it.
        every: int
            the length of the period, in steps. 0 disables the decay.
        step: int
            1-based index of the step that just finished
    """
    if every == 0:
        new_lr = old_lr
    elif step % every == 0:
        new_lr = old_lr / shrink_factor
    else:
        new_lr = old_lr
    return new_lr


def lr_schedule_manual(old_lr, schedule, step):
    """
    manual schedule

    Parameters
    ----------
        schedule : list of dicts
             each dict has two keys, `range` and `lr`.
            `range` is a tuple (start, end) defining an interval,
            start and end are included in the interval.
            `lr` is the learning rate used in the interval defined
             by `range`.

        step : int
    """
    new_lr = old_lr
    for s in schedule:
        first, last = s['range']
        if first <= step <= last:
            new_lr = s['lr']
            break
    return new_lr


class TimeBudget(Callback):
    """
    a time budget callback that raises BudgetFinishedException() when
    the time budget is reached.

    Parameters
    ----------

    budget_secs: float
        budget in secs
    """

    def __init__(self, budget_secs=float('inf'), time=time.time):
        self.start = time()
        self.time = time
        self.budget_secs = budget_secs

    def on_step_end(self, step, logs={}):
        t = self.time()
        if t - self.start >= self.budget_secs:
            raise BudgetFinishedException()


def build_lr_schedule_callback(name, params, print_func=logger.info):
    return LearningRateScheduler(name=name, params=params, print_func=print_func)
