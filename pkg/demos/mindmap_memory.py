"""Knowledge-graph memory: extraction, clustering, summaries, graph query.

Two reasoning snippets about different subjects become one graph; the
clustering separates them, and a question retrieves the right entity.

    python3 demos/mindmap_memory.py
"""

from agentloop import KnowledgeGraph, MockProviderSet
from agentloop.mindmap import (
    detect_communities,
    extract_graph_delta,
    merge_delta,
    query_graph,
    render_entity,
)

# The graph-construction model is scripted with tab-separated records.
extractor = MockProviderSet(
    chat_scripts={
        "graph_construction": [
            "ENTITY\tMarie Curie\tphysicist and chemist\n"
            "ENTITY\tradium\tradioactive element\n"
            "REL\tMarie Curie\tradium\tdiscovered",
            "ENTITY\tMount Everest\thighest mountain\n"
            "ENTITY\tNepal\tcountry in the Himalayas\n"
            "REL\tMount Everest\tNepal\tlocated_in",
        ]
    }
)

graph = KnowledgeGraph()
for snippet in (
    "Marie Curie discovered radium in 1898.",
    "Mount Everest rises on the border of Nepal.",
):
    delta = extract_graph_delta(snippet, graph, extractor)
    merge_delta(graph, delta)

print("entities:")
for entity in graph.entities.values():
    print(f"  [{entity.id}] {render_entity(graph, entity)}")

communities = detect_communities(graph)
print("\ncommunities (greedy modularity maximization):")
for community in communities:
    names = sorted(graph.entities[m].canonical_name for m in community.members)
    print(f"  #{community.id}: {names} (internal weight {community.internal_weight})")

answerer = MockProviderSet(
    chat_scripts={"graph_construction": ["Radium was discovered by Marie Curie."]}
)
answer = query_graph(graph, "Who discovered radium?", answerer)
print(f"\nquery answer: {answer}")

print("\nDOT export:")
print(graph.to_dot())
