"""End-to-end reasoning session with scripted providers.

The mock reasoning model pauses for a web search and a computation, gets
each result injected back, and finishes. Run it and read the trace:

    python3 demos/tool_call_session.py
"""

from agentloop import (
    MockProviderSet,
    SessionConfig,
    WebPage,
    WebSearchConfig,
    run_session,
)

providers = MockProviderSet(
    chat_scripts={
        "reasoning": [
            "I need the height first. "
            "<<BEGIN_SEARCH>>height of Mount Everest in meters<<END_SEARCH>>",
            "Now convert it. <<BEGIN_CODE>>convert 8849 meters to feet<<END_CODE>>",
            "Mount Everest is 8,849 m, about 29,032 feet.",
        ],
        "synthesis": [
            "Mount Everest is 8,849 meters tall.",
            "The peak stands at 8,849 meters.",
        ],
        "coding": [
            "```python\nprint(round(8849 * 3.28084))\n```",
            "8,849 meters is about 29,032 feet.",
        ],
    },
    search_results={
        "height of Mount Everest in meters": [
            WebPage(
                url="https://example.org/everest",
                title="Mount Everest",
                content="The summit elevation is 8849 meters above sea level.",
            )
        ]
    },
    rerank_scores=[[0.95]],
)

config = SessionConfig(
    memory_mode="none",
    websearch=WebSearchConfig(query_breakdown=False),
)

result = run_session("How tall is Mount Everest in feet?", config, providers)

print(f"termination: {result.termination}")
print(f"answer:      {result.final_answer}")
print()
print("trace records:")
for record in result.trace.records:
    name = type(record).__name__
    text = getattr(record, "text", getattr(record, "query", ""))
    print(f"  {name:<15} {text[:70]!r}")
print()
print(f"provider calls: {result.trace.provider_calls}")
