from typing import Dict

from app.hypernet.network import HyperNetwork
from app.models.domain import TaskLanguagePair
from app.numcore.tensor import Tensor
from app.providers.base import AdapterProvider, AdapterStack


class HyperAdapterProvider(AdapterProvider):
    """Adapters generated on demand from task, language and layer embeddings.

    Generated weights are graph nodes, never leaves: gradients flow back into
    the hypernetwork.
    """

    def __init__(self, hypernet: HyperNetwork) -> None:
        self.hypernet = hypernet

    def adapters_for(self, pair: TaskLanguagePair) -> AdapterStack:
        task_id = self.hypernet.task_id(pair.task)
        language_id = self.hypernet.language_id(pair.language)
        return AdapterStack(self.hypernet.generate_stack(task_id, language_id))

    def parameter_groups(self) -> Dict[str, Dict[str, Tensor]]:
        return self.hypernet.parameter_groups()
