"""Reference NLI classifier backend for the speclint wire protocol."""
