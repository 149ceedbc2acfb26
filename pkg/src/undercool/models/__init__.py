from .alloy import AlloyKernel, AlloyParams
from .free_growth import FreeGrowthKernel, FreeGrowthParams

__all__ = ["AlloyKernel", "AlloyParams", "FreeGrowthKernel", "FreeGrowthParams"]
