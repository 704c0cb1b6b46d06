from .netpbm import NetpbmError, read_pgm, read_ppm, write_pgm, write_ppm
from .dataset import Sample, check_mask, hide_labels, load_dataset, save_dataset, stack_batch
from .shapes import gen_shapes_dataset
from .augment import SCALES, augment, augment_batch
from .split import SplitSpec, make_split, parse_fraction, read_split, write_split
