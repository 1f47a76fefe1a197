import numpy as np

from .exceptions import InconsistentCheckpointError, UsageError
from .layers import DTYPE


class NamedParametersMixin:
    """
    Parameter bookkeeping shared by everything that owns ``ConvParams`` and
    ``BnParams``.

    Subclasses implement ``iter_layers()`` yielding the layer parameter
    objects in a fixed order; names, state dicts and update tracking derive
    from it.
    """
    _generation = 0

    def iter_layers(self):
        raise NotImplementedError('subclasses must yield their layer parameters')

    @property
    def generation(self):
        return self._generation

    def mark_updated(self):
        self._generation += 1

    def named_parameters(self):
        for layer in self.iter_layers():
            if hasattr(layer, 'weight'):
                yield f"{layer.name}.weight", layer.weight
                yield f"{layer.name}.bias", layer.bias
            else:
                yield f"{layer.name}.gamma", layer.gamma
                yield f"{layer.name}.beta", layer.beta

    def named_buffers(self):
        for layer in self.iter_layers():
            if hasattr(layer, 'running_mean'):
                yield f"{layer.name}.running_mean", layer.running_mean
                yield f"{layer.name}.running_var", layer.running_var
                yield f"{layer.name}.num_batches", np.array([layer.num_batches], dtype=DTYPE)

    def parameters(self):
        return dict(self.named_parameters())

    @property
    def parameter_count(self):
        return sum(array.size for _, array in self.named_parameters())

    def state_dict(self):
        state = {name: array.copy() for name, array in self.named_parameters()}
        state.update((name, array.copy()) for name, array in self.named_buffers())
        return state

    def load_state_dict(self, state, error=InconsistentCheckpointError):
        expected = {name: array.shape for name, array in self.named_parameters()}
        expected.update((name, array.shape) for name, array in self.named_buffers())
        missing = expected.keys() - state.keys()
        unexpected = state.keys() - expected.keys()
        if missing or unexpected:
            raise error(f"tensor names do not match the architecture "
                        f"(missing: {sorted(missing)}, unexpected: {sorted(unexpected)})")
        for name, shape in expected.items():
            if tuple(state[name].shape) != tuple(shape):
                raise error(f"tensor '{name}' has shape {tuple(state[name].shape)}, architecture expects {tuple(shape)}")

        for layer in self.iter_layers():
            prefix = layer.name
            if hasattr(layer, 'weight'):
                layer.weight[...] = state[f"{prefix}.weight"]
                layer.bias[...] = state[f"{prefix}.bias"]
            else:
                layer.gamma[...] = state[f"{prefix}.gamma"]
                layer.beta[...] = state[f"{prefix}.beta"]
                layer.running_mean = np.array(state[f"{prefix}.running_mean"], dtype=DTYPE)
                layer.running_var = np.array(state[f"{prefix}.running_var"], dtype=DTYPE)
                layer.num_batches = int(state[f"{prefix}.num_batches"][0])
        self.mark_updated()

    def zero_(self):
        for _, array in self.named_parameters():
            array[...] = 0
        self.mark_updated()
        return self

    def check_cache(self, cache):
        if cache is None:
            raise UsageError('You must first call forward() in train mode')
        if cache.owner != id(self) or cache.generation != self.generation:
            raise UsageError('stale forward cache: parameters changed since the matching forward() call')
