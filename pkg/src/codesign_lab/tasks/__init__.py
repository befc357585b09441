from .registry import TASKS, build_task, spec_for

__all__ = ["TASKS", "build_task", "spec_for"]
