"""Neural models: the attention routing policy and the depot generator."""
