from .rampup import sigmoid_rampup
from .mean_teacher import (
    TeacherState,
    consistency_loss,
    ema_update,
    mt_sup_loss,
    mt_unsup_loss,
    teacher_sup_loss,
)
from .co_teaching import (
    PeerPair,
    cps_loss,
    ct_pseudo_labels,
    ct_sup_loss,
    ct_unsup_loss,
    pair_forward,
)
