from .permutations import PermutationSet, generate_permutation_set
from .pretext import (
    apply_jigsaw,
    center_crop_to_multiple_of_3,
    jigsaw_segmentation_loss,
    make_jigsaw_segmentation_batch,
    make_pretext_batch,
    ssl_loss,
)
