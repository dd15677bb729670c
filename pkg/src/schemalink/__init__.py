"""Schema-linking reward shaping, GRPO mathematics and a toy policy simulator."""
