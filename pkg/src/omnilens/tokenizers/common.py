from omnilens.errors import ConfigurationError


def add_positional(tokens, table):
    """Add one learnable row per token index; the table may be longer than the sequence."""
    m = tokens.shape[-2]
    if table.shape[0] < m:
        raise ConfigurationError(f"positional table has {table.shape[0]} rows for {m} tokens")
    rows = table if table.shape[0] == m else table[:m]
    return tokens + rows
