"""The instruction asset installed into every workspace as SKILL.md.

The text is the environment's contract with the agent: what the files are,
which of them may be touched, and the optimize-verify-profile loop. It is
installed verbatim by init_workspace so tests can pin its digest.
"""

DEFAULT_SKILL_TEXT = """\
# Kernel optimization workflow

You are given an operator graph in `model.py` and a measurement harness.
Produce a faster schedule for the same math. A speedup only counts when it
beats the compiled baseline by more than 5%.

## Restrictions

- Do NOT modify `binding_registry.h`, `binding.cpp`, `model.py`, `utils/`,
  or this file. They are fixed infrastructure; writes to them are refused.
- Work only in `kernels/` and `model_new.py`.
- Do NOT call framework fallbacks from kernel or binding sources. Calls
  into the `torch::` / `at::` C++ namespaces, `torch.nn.functional`, or
  `F.<op>(...)` shorthands are detected at submission and fail the run.
- There is no network access and no package installation.

## Workspace

```
.
binding_registry.h    # fixed: op registration table
binding.cpp           # fixed: module binding
kernels/              # yours: candidate spec goes here
utils/                # fixed: verification and profiling entry points
model.py              # fixed: reference operator graph
model_new.py          # yours: notes on the optimized schedule
SKILL.md              # this file
```

## Workflow

1. Read `model.py` and identify rewrite and fusion opportunities.
2. Profile the baselines: `python3 -m utils.profiling`.
3. Write your candidate as structured text to `kernels/candidate.json`:
   whitelisted rewrite applications plus an optional explicit schedule.
4. Check correctness: `python3 -m utils.verification`.
5. Profile the candidate against both baselines:
   `python3 -m utils.profiling`.
6. Submit the candidate. Keep iterating while budget remains; the best
   correct submission is what scores.

Candidates that fail verification are never timed. Submitting early and
often is fine; only correctness and the final speedup matter.
"""
