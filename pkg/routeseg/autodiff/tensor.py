"""
Dense float64 tensors with reverse-mode automatic differentiation.

A differentiable result keeps a reference to the :class:`Function` that
produced it; :func:`backward` orders those functions in a :class:`Tape`
(topological order) and walks it in reverse, accumulating gradients into
the ``grad`` buffer of every leaf tensor created with ``requires_grad=True``.
Gradients accumulate across calls; the caller zeroes them.
"""

import threading
from contextlib import contextmanager
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import softmax as scipy_softmax

_grad_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad():
    """
    Context manager in which results are not recorded for differentiation.

    The flag is thread-local, so a thread computing teacher predictions does
    not switch recording off for another thread.
    """
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement ``forward`` on numpy arrays and ``backward``, which
    maps the gradient w.r.t. the output to one gradient per input (``None``
    for inputs that need none). Anything needed by ``backward`` is saved on
    ``self`` during ``forward``.
    """

    def __init__(self, *parents: "Tensor"):
        self.parents = parents

    def forward(self, *arrays: np.ndarray, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs, **kwargs) -> "Tensor":
        tensors = tuple(as_tensor(x) for x in inputs)
        func = cls(*tensors)
        out_data = func.forward(*(t.data for t in tensors), **kwargs)
        track = is_grad_enabled() and any(t.requires_grad for t in tensors)
        if not track:
            return Tensor(out_data)
        return Tensor(out_data, requires_grad=True, _creator=func)

    @property
    def name(self):
        return type(self).__name__


class Tensor:
    """
    N-dimensional float64 array participating in the computation graph.

    Parameters
    ----------
    data : array-like
        Values; converted to a C-contiguous float64 array.
    requires_grad : bool, default: False
        If True, operations on this tensor are recorded and, for a leaf,
        ``grad`` is populated by :func:`backward`.
    name : str, optional
        Parameter name, used in diagnostics and checkpoints.

    Attributes
    ----------
    data : numpy.ndarray
    grad : numpy.ndarray or None
        Accumulated gradient, same shape as ``data``.
    creator : Function or None
        Operation that produced the tensor (None for leaves).
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None, _creator=None):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.creator: Optional[Function] = _creator
        self.name = name

    # array-like interface
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return self.creator is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """New leaf sharing no graph with this tensor."""
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __len__(self):
        return self.shape[0]

    # arithmetic
    def __add__(self, other):
        return Add.apply(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return Sub.apply(self, other)

    def __rsub__(self, other):
        return Sub.apply(other, self)

    def __mul__(self, other):
        return Mul.apply(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return Mul.apply(self, 1.0 / float(other))

    def __neg__(self):
        return Mul.apply(self, -1.0)

    def __getitem__(self, index):
        return GetItem.apply(self, index=index)

    def sum(self, axis=None, keepdims=False):
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return Sum.apply(self, axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def flip(self, axis):
        return Flip.apply(self, axis=axis)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """
    Operations reachable from an output, in topological order.

    Every function appears after the functions producing its inputs, so a
    reverse walk visits each node once all of its consumers are done.
    """

    def __init__(self, nodes: List[Function]):
        self.nodes = nodes

    @classmethod
    def record(cls, output: Tensor) -> "Tape":
        order: List[Function] = []
        if output.creator is None:
            return cls(order)
        visited = set()
        # iterative post-order DFS; deep routing grids overflow recursion
        stack = [(output.creator, False)]
        while stack:
            func, expanded = stack.pop()
            if expanded:
                order.append(func)
                continue
            if id(func) in visited:
                continue
            visited.add(id(func))
            stack.append((func, True))
            for parent in func.parents:
                if parent.creator is not None and id(parent.creator) not in visited:
                    stack.append((parent.creator, False))
        return cls(order)

    def __len__(self):
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)


def backward(loss: Tensor, tape: Optional[Tape] = None):
    """
    Populate ``grad`` of every leaf reachable from a scalar loss.

    Parameters
    ----------
    loss : Tensor
        Scalar (size-1) result of differentiable operations.
    tape : Tape, optional
        Pre-recorded tape for ``loss``; recorded here if omitted.
    """
    if loss.data.size != 1:
        raise ValueError(
            f"backward() requires a scalar loss, got a tensor of shape {loss.shape}"
        )
    if not loss.requires_grad:
        raise ValueError("backward() called on a tensor that is not on the tape")
    if loss.creator is None:
        loss.grad = _accumulate(loss.grad, np.ones_like(loss.data))
        return
    tape = tape or Tape.record(loss)

    # each Function produces exactly one tensor, so its id keys that tensor's gradient
    grads = {id(loss.creator): np.ones_like(loss.data)}
    for func in reversed(tape.nodes):
        grad_out = grads.pop(id(func), None)
        if grad_out is None:
            continue
        grads_in = func.backward(grad_out)
        for parent, g in zip(func.parents, grads_in):
            if g is None or not parent.requires_grad:
                continue
            if parent.creator is None:
                parent.grad = _accumulate(parent.grad, g)
            else:
                key = id(parent.creator)
                grads[key] = _accumulate(grads.get(key), g)


def _accumulate(current, g):
    g = np.asarray(g, dtype=np.float64)
    if current is None:
        return g.copy()
    return current + g


def unbroadcast(grad: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    """Sum ``grad`` over the axes numpy broadcasting added to reach its shape."""
    shape = tuple(shape)
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


#
# Elementary operations
#


class Add(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), -unbroadcast(grad, self.shapes[1])


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return (
            unbroadcast(grad * self.b, self.a.shape),
            unbroadcast(grad * self.a, self.b.shape),
        )


class Sum(Function):
    def forward(self, a, axis=None, keepdims=False):
        self.in_shape = a.shape
        self.axis = axis
        self.keepdims = keepdims
        return np.asarray(a.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.in_shape).copy(),)


class Reshape(Function):
    def forward(self, a, shape):
        self.in_shape = a.shape
        return a.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.in_shape),)


class GetItem(Function):
    def forward(self, a, index):
        self.in_shape = a.shape
        self.index = index
        return np.asarray(a[index])

    def backward(self, grad):
        out = np.zeros(self.in_shape)
        np.add.at(out, self.index, grad)
        return (out,)


class Flip(Function):
    def forward(self, a, axis):
        self.axis = axis
        return np.flip(a, axis=axis).copy()

    def backward(self, grad):
        return (np.flip(grad, axis=self.axis).copy(),)


_relu_state = threading.local()


@contextmanager
def record_relu_masks():
    """Collect the activation masks of every ReLU evaluated in this block, in order."""
    masks: List[np.ndarray] = []
    _relu_state.record = masks
    try:
        yield masks
    finally:
        _relu_state.record = None


@contextmanager
def replay_relu_masks(masks: Sequence[np.ndarray]):
    """
    Reuse recorded masks instead of thresholding. Finite differences taken
    inside this block stay on the same linear piece as the recorded forward.
    """
    _relu_state.replay = iter(masks)
    try:
        yield
    finally:
        _relu_state.replay = None


class ReLU(Function):
    def forward(self, a):
        replay = getattr(_relu_state, "replay", None)
        if replay is not None:
            self.mask = next(replay)
        else:
            self.mask = a > 0
            record = getattr(_relu_state, "record", None)
            if record is not None:
                record.append(self.mask)
        return a * self.mask

    def backward(self, grad):
        return (grad * self.mask,)


class Softmax(Function):
    def forward(self, a, axis=-1):
        self.axis = axis
        self.out = scipy_softmax(a, axis=axis)
        return self.out

    def backward(self, grad):
        s = self.out
        dot = (grad * s).sum(axis=self.axis, keepdims=True)
        return (s * (grad - dot),)


def relu(x) -> Tensor:
    return ReLU.apply(x)


def softmax(x, axis: int = -1) -> Tensor:
    return Softmax.apply(x, axis=axis)
