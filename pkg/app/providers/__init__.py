"""Adapter providers: static adapter stacks and hypernetwork-generated adapters."""
