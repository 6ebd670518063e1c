"""The threshold-gated search refinement loop, made visible.

Iteration 1 retrieves weakly relevant pages (gate fails), iteration 2
passes; watch the mean-of-top-10 gate and the per-iteration breakdown.

    python3 demos/search_gate_loop.py
"""

from agentloop import MockProviderSet, SearchTask, WebPage, run_search
from agentloop.websearch import gate_decision

providers = MockProviderSet(
    chat_scripts={
        "breakdown": [
            "economic indicators definition",
            "U.S. Q4 2024 inflation rate\nU.S. Q4 2024 consumer confidence index",
        ],
        "synthesis": [
            "Q4 2024 U.S. inflation ran at 2.7%.",
            "Consumer confidence weakened late in the quarter.",
            "Inflation was 2.7% and consumer confidence softened in Q4 2024.",
        ],
    },
    default_search=[
        WebPage(url=f"https://example.org/{i}", title=f"source {i}", content="Q4 2024 data")
        for i in range(4)
    ],
    rerank_scores=[
        [0.45, 0.40, 0.35, 0.30],  # iteration 1: mean 0.375, gate fails
        [0.95, 0.90, 0.85, 0.80],  # iteration 2: mean 0.875, gate passes
    ],
)

task = SearchTask(
    original_query="Search the external economic indicators",
    reasoning_context="optimal investing strategy for a U.S. retailer in Q4 2024",
)
outcome = run_search(task, providers)

print(f"iterations used: {outcome.iterations_used}")
print(f"confidence:      {outcome.confidence}")
print(f"final queries:   {outcome.refined_queries}")
print(f"snippet:         {outcome.snippet}")

print("\nthe gate itself (mean of top 10 vs 0.7, inclusive):")
for scores in ([0.9] * 10, [0.8] * 5 + [0.5] * 5, [1.0, 0.9, 0.8, 0.1]):
    mean = sum(sorted(scores, reverse=True)[:10]) / min(10, len(scores))
    print(f"  scores {scores} -> mean {mean:.3f} -> {'pass' if gate_decision(scores) else 'fail'}")
