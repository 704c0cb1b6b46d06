from typing import Union

import numpy as np

from routeseg.seeding import Seeder

# seed given either as a Seeder or as an integer entropy
Seed = Union[Seeder, int]

# class-index map, shape (B, H, W) or (H, W); 255 marks ignored pixels
LabelMap = np.ndarray
