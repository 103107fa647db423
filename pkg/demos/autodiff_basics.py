"""
Recording a computation and reading gradients back
==================================================

Every model in the package is built from a small tape of numpy operations.
"""

import numpy as np

from auxfdiv import grad_engine as ge
from auxfdiv.grad_engine import ParameterSet, Tape

# parameters live in named sets tagged with a role
params = ParameterSet({"w": np.array([[0.5, -1.0], [2.0, 0.3]]), "b": np.zeros(2)})
x = np.array([[1.0, 2.0], [0.5, -0.5], [0.0, 1.0]])

# operations inside the context are recorded
with Tape() as tape:
    h = ge.bias_add(ge.matmul(x, params.leaf("w")), params.leaf("b"))
    loss = ge.logsumexp(ge.reshape(h, (-1,)))

grads = tape.backward(loss)
print("loss", loss.value)
print("dloss/dw\n", grads["w"])

# the same numbers from central differences
print("max relative error vs finite differences:",
      ge.gradient_check(lambda ps: ge.logsumexp(ge.reshape(
          ge.bias_add(ge.matmul(x, ps.leaf("w")), ps.leaf("b")), (-1,))), params))

# a bad input is caught where it happens, with the node that produced it
with Tape():
    try:
        ge.log(ge.current_tape().constant(np.array([1.0, -2.0])))
    except Exception as err:
        print(type(err).__name__, err)
