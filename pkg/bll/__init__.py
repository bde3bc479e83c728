from .models import Branch, Command, Domain, EmitTarget, Mode, RankReport, RunConfig, SamplePlan, WebSpec
from .exceptions import SWebError, ValidationError, NotFoundError, DegenerateWebError, MixedBranchError
