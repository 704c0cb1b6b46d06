from .confusion import ConfusionMatrix
from .evaluation import confusion_matrix, evaluate
