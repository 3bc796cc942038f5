from cpsample_lab.libtensor.gradcheck import grad_check
from cpsample_lab.libtensor.graph import ComputeGraph, backward, evaluate
from cpsample_lab.libtensor.tensor import Tensor, as_array

__all__ = ["ComputeGraph", "Tensor", "as_array", "backward", "evaluate", "grad_check"]
