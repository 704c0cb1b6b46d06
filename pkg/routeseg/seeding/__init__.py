from .seeder import Seeder
from .seeding import SEED_ENV_VAR, resolve_seed
