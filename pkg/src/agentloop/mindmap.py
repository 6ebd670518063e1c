"""Knowledge-graph memory built from reasoning text.

An extraction model turns reasoning spans into entities and labeled
relations; the graph is clustered into communities by greedy modularity
maximization, each community is summarized, and the whole structure can
be queried with plain questions through the shared retrieval core.
"""

import json
import logging
from dataclasses import dataclass, field

from . import rag
from .backends import ChatRequest, Message, ProviderError

logger = logging.getLogger(__name__)

MEMORY_EMPTY = "memory is empty"
QUERY_TOP_K = 8

# Strict float comparisons on modularity gains need a little slack.
_EPS = 1e-12


def normalize_name(name: str) -> str:
    return name.strip().casefold()


@dataclass
class Entity:
    id: int
    canonical_name: str
    description: str = ""
    mention_count: int = 1


@dataclass
class Relation:
    source: int
    target: int
    label: str
    weight: float = 1.0

    def key(self) -> tuple[int, int, str]:
        return (self.source, self.target, self.label)


@dataclass
class Community:
    id: int
    members: frozenset[int]
    internal_weight: float


@dataclass
class GraphDelta:
    entities: list[Entity] = field(default_factory=list)
    relations: list[Relation] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not self.entities and not self.relations


class KnowledgeGraph:
    """Entities, weighted labeled relations, communities, and community summaries."""

    def __init__(self) -> None:
        self.entities: dict[int, Entity] = {}
        self.relations: dict[tuple[int, int, str], Relation] = {}
        self.communities: list[Community] | None = None
        self.community_summaries: dict[int, str] = {}
        self._by_name: dict[str, int] = {}
        self._next_id = 0
        # Durable summary cache keyed by membership, so re-clustering that
        # reproduces a community does not re-bill the provider.
        self._summary_cache: dict[frozenset[int], str] = {}

    def entity_by_name(self, name: str) -> Entity | None:
        entity_id = self._by_name.get(normalize_name(name))
        return None if entity_id is None else self.entities[entity_id]

    def allocate_id(self) -> int:
        allocated = self._next_id
        self._next_id += 1
        return allocated

    def neighbors(self, entity_id: int) -> list[Relation]:
        return [
            r
            for r in self.relations.values()
            if r.source == entity_id or r.target == entity_id
        ]

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "entities": [
                {
                    "id": e.id,
                    "name": e.canonical_name,
                    "description": e.description,
                    "mention_count": e.mention_count,
                }
                for e in sorted(self.entities.values(), key=lambda e: e.id)
            ],
            "relations": [
                {
                    "source": r.source,
                    "target": r.target,
                    "label": r.label,
                    "weight": r.weight,
                }
                for r in sorted(self.relations.values(), key=lambda r: r.key())
            ],
            "communities": None
            if self.communities is None
            else [
                {
                    "id": c.id,
                    "members": sorted(c.members),
                    "internal_weight": c.internal_weight,
                }
                for c in self.communities
            ],
            "community_summaries": {
                str(cid): text for cid, text in sorted(self.community_summaries.items())
            },
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "KnowledgeGraph":
        graph = cls()
        for raw in data.get("entities", []):
            entity = Entity(
                id=raw["id"],
                canonical_name=raw["name"],
                description=raw.get("description", ""),
                mention_count=raw.get("mention_count", 1),
            )
            graph.entities[entity.id] = entity
            graph._by_name[normalize_name(entity.canonical_name)] = entity.id
        graph._next_id = 1 + max(graph.entities, default=-1)
        for raw in data.get("relations", []):
            relation = Relation(
                source=raw["source"],
                target=raw["target"],
                label=raw["label"],
                weight=raw.get("weight", 1.0),
            )
            graph.relations[relation.key()] = relation
        if data.get("communities") is not None:
            graph.communities = [
                Community(
                    id=raw["id"],
                    members=frozenset(raw["members"]),
                    internal_weight=raw["internal_weight"],
                )
                for raw in data["communities"]
            ]
        for cid, text in (data.get("community_summaries") or {}).items():
            graph.community_summaries[int(cid)] = text
        return graph

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "KnowledgeGraph":
        return cls.from_json_dict(json.loads(text))

    def to_dot(self) -> str:
        """Graphviz rendering for eyeballing the memory state."""
        lines = ["digraph mindmap {", "  rankdir=LR;"]
        for e in sorted(self.entities.values(), key=lambda e: e.id):
            label = e.canonical_name.replace('"', "'")
            lines.append(f'  n{e.id} [label="{label}"];')
        for r in sorted(self.relations.values(), key=lambda r: r.key()):
            label = r.label.replace('"', "'")
            lines.append(f'  n{r.source} -> n{r.target} [label="{label}"];')
        lines.append("}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------

_EXTRACT_PROMPT = """Extract entities and relations from the reasoning text below.
Reply with one record per line and nothing else. Use literal tab characters
between fields:
ENTITY\t<name>\t<short description>
REL\t<source entity name>\t<target entity name>\t<relation label>
If there is nothing to extract, reply with the single word NONE.

Reasoning text:
{text}"""

_FORMAT_REMINDER = (
    "Your previous reply was not in the required format. Reply ONLY with "
    "ENTITY and REL records, one per line, tab-separated, or the word NONE."
)


def _parse_extraction(reply: str, graph: KnowledgeGraph) -> GraphDelta | None:
    """Parse the line-record format; None means unusable output."""
    stripped = reply.strip()
    if stripped == "NONE":
        return GraphDelta()

    delta = GraphDelta()
    by_name: dict[str, Entity] = {}
    next_id = graph._next_id
    valid_lines = 0

    def resolve(name: str) -> Entity:
        nonlocal next_id
        norm = normalize_name(name)
        if norm in by_name:
            return by_name[norm]
        existing = graph.entity_by_name(name)
        if existing is not None:
            entity = Entity(
                id=existing.id,
                canonical_name=existing.canonical_name,
                description="",
                mention_count=0,
            )
        else:
            entity = Entity(id=next_id, canonical_name=name.strip(), mention_count=0)
            next_id += 1
        by_name[norm] = entity
        delta.entities.append(entity)
        return entity

    pending: dict[tuple[int, int, str], Relation] = {}
    for line in stripped.splitlines():
        line = line.strip()
        if not line:
            continue
        parts = line.split("\t")
        if parts[0] == "ENTITY" and len(parts) >= 2 and parts[1].strip():
            entity = resolve(parts[1])
            entity.mention_count += 1
            if len(parts) >= 3 and not entity.description:
                entity.description = parts[2].strip()
            valid_lines += 1
        elif parts[0] == "REL" and len(parts) >= 4 and parts[1].strip() and parts[2].strip():
            src = resolve(parts[1])
            dst = resolve(parts[2])
            if src.id == dst.id:
                logger.warning("dropping self-relation on %r", parts[1])
                continue
            label = parts[3].strip()
            key = (src.id, dst.id, label)
            if key in pending:
                pending[key].weight += 1.0
            else:
                pending[key] = Relation(source=src.id, target=dst.id, label=label)
            valid_lines += 1

    if valid_lines == 0:
        return None
    for entity in delta.entities:
        entity.mention_count = max(entity.mention_count, 1)
    delta.relations = list(pending.values())
    return delta


def extract_graph_delta(reasoning_text: str, graph: KnowledgeGraph, providers) -> GraphDelta:
    """One structured-output call turning reasoning text into a graph delta.

    Entities matching existing canonical names reuse their ids. An
    unparseable reply earns one format-reminder reprompt; a second failure
    yields an empty delta with a logged warning.
    """
    if not reasoning_text:
        raise ValueError("reasoning_text must be nonempty")
    prompt = _EXTRACT_PROMPT.format(text=reasoning_text)
    messages = [Message(role="user", content=prompt)]
    try:
        reply = providers.chat(ChatRequest(role="graph_construction", messages=messages)).text
        delta = _parse_extraction(reply, graph)
        if delta is not None:
            return delta
        messages = messages + [
            Message(role="assistant", content=reply),
            Message(role="user", content=_FORMAT_REMINDER),
        ]
        reply = providers.chat(ChatRequest(role="graph_construction", messages=messages)).text
        delta = _parse_extraction(reply, graph)
        if delta is not None:
            return delta
        logger.warning("graph extraction failed twice; continuing with empty delta")
    except ProviderError as exc:
        logger.warning("graph extraction provider error: %s", exc)
    return GraphDelta()


def merge_delta(graph: KnowledgeGraph, delta: GraphDelta) -> KnowledgeGraph:
    """Fold a delta into the graph.

    Duplicate relations accumulate weight instead of duplicating. Any
    change to the node or weighted edge set invalidates community
    assignments (summaries stay cached by membership).
    """
    structural_change = False
    for entity in delta.entities:
        existing = graph.entities.get(entity.id)
        if existing is None:
            graph.entities[entity.id] = Entity(
                id=entity.id,
                canonical_name=entity.canonical_name,
                description=entity.description,
                mention_count=max(entity.mention_count, 1),
            )
            graph._by_name[normalize_name(entity.canonical_name)] = entity.id
            graph._next_id = max(graph._next_id, entity.id + 1)
            structural_change = True
        else:
            name = normalize_name(entity.canonical_name)
            if name and name != normalize_name(existing.canonical_name):
                raise ValueError(
                    f"delta entity id {entity.id} names {entity.canonical_name!r} "
                    f"but graph has {existing.canonical_name!r}"
                )
            existing.mention_count += entity.mention_count
            if entity.description and not existing.description:
                existing.description = entity.description

    for relation in delta.relations:
        for endpoint in (relation.source, relation.target):
            if endpoint not in graph.entities:
                raise ValueError(f"relation endpoint {endpoint} not in graph")
        if relation.source == relation.target:
            raise ValueError("self-relations are not allowed")
        existing = graph.relations.get(relation.key())
        if existing is None:
            graph.relations[relation.key()] = Relation(*relation.key(), weight=relation.weight)
        else:
            existing.weight += relation.weight
        structural_change = True

    if structural_change:
        graph.communities = None
        graph.community_summaries = {}
    return graph


# ---------------------------------------------------------------------------
# Community detection (greedy modularity maximization)
# ---------------------------------------------------------------------------


def build_adjacency(graph: KnowledgeGraph) -> dict[int, dict[int, float]]:
    """Undirected weighted adjacency; parallel labels collapse by summing."""
    adj: dict[int, dict[int, float]] = {e: {} for e in graph.entities}
    for r in graph.relations.values():
        adj[r.source][r.target] = adj[r.source].get(r.target, 0.0) + r.weight
        adj[r.target][r.source] = adj[r.target].get(r.source, 0.0) + r.weight
    return adj


def modularity(adjacency: dict[int, dict[int, float]], assignment: dict[int, int]) -> float:
    """Q = (1/2m) * sum_ij [A_ij - k_i*k_j/2m] * delta(c_i, c_j) on a simple graph.

    The null-model term applies to every same-community pair, adjacent or
    not, which reduces to per-community totals.
    """
    two_m = sum(sum(neigh.values()) for neigh in adjacency.values())
    if two_m == 0:
        return 0.0
    deg = {u: sum(neigh.values()) for u, neigh in adjacency.items()}
    in_w: dict[int, float] = {}
    tot: dict[int, float] = {}
    for u, neigh in adjacency.items():
        c = assignment[u]
        tot[c] = tot.get(c, 0.0) + deg[u]
        for v, w in neigh.items():
            if assignment[v] == c:
                in_w[c] = in_w.get(c, 0.0) + w
    return sum(in_w.get(c, 0.0) / two_m - (tot[c] / two_m) ** 2 for c in tot)


def _level_modularity(nodes, adj, selfw, deg, com, m) -> float:
    in_w: dict[int, float] = {}
    tot: dict[int, float] = {}
    for u in nodes:
        c = com[u]
        tot[c] = tot.get(c, 0.0) + deg[u]
        in_w[c] = in_w.get(c, 0.0) + 2.0 * selfw[u]
        for v, w in adj[u].items():
            if com[v] == c:
                in_w[c] = in_w.get(c, 0.0) + w
    q = 0.0
    for c in tot:
        q += in_w.get(c, 0.0) / (2.0 * m) - (tot[c] / (2.0 * m)) ** 2
    return q


def louvain_partition(
    adjacency: dict[int, dict[int, float]],
) -> tuple[dict[int, int], list[float]]:
    """Deterministic greedy modularity maximization.

    Local-moving passes visit nodes in ascending id order; a node moves
    only when the modularity gain is strictly positive, ties among equally
    good targets break toward the lowest community id. When a pass makes
    no move, communities are aggregated into super-nodes and the process
    repeats until aggregation is a no-op.

    Returns the node -> community assignment (labels are 0..k-1 in order
    of each community's smallest member id) and the modularity after each
    local-moving pass.
    """
    original_nodes = sorted(adjacency)
    if not original_nodes:
        return {}, []
    m = sum(sum(neigh.values()) for neigh in adjacency.values()) / 2.0
    if m == 0.0:
        return {u: i for i, u in enumerate(original_nodes)}, []

    # Level state: simple graph + self-loop weights from prior aggregations.
    nodes = list(original_nodes)
    adj = {u: dict(adjacency[u]) for u in nodes}
    selfw = {u: 0.0 for u in nodes}
    membership = {u: u for u in original_nodes}  # original node -> current level node
    q_history: list[float] = []

    while True:
        deg = {u: 2.0 * selfw[u] + sum(adj[u].values()) for u in nodes}
        com = {u: u for u in nodes}
        tot = {u: deg[u] for u in nodes}

        while True:
            moved = False
            for u in nodes:
                cu = com[u]
                links: dict[int, float] = {}
                for v, w in adj[u].items():
                    links[com[v]] = links.get(com[v], 0.0) + w
                tot[cu] -= deg[u]

                def gain(c: int) -> float:
                    return links.get(c, 0.0) / m - tot[c] * deg[u] / (2.0 * m * m)

                best_c, best_gain = cu, gain(cu)
                for c in sorted(links):
                    g = gain(c)
                    if g > best_gain + _EPS or (abs(g - best_gain) <= _EPS and c < best_c):
                        best_c, best_gain = c, g
                if best_c != cu and best_gain > gain(cu) + _EPS:
                    com[u] = best_c
                    tot[best_c] += deg[u]
                    moved = True
                else:
                    tot[cu] += deg[u]
            q_history.append(_level_modularity(nodes, adj, selfw, deg, com, m))
            if not moved:
                break

        labels = sorted(set(com.values()))
        if len(labels) == len(nodes):
            break

        # Aggregate communities into super-nodes, keyed by community label rank.
        relabel = {label: i for i, label in enumerate(labels)}
        new_nodes = list(range(len(labels)))
        new_adj: dict[int, dict[int, float]] = {c: {} for c in new_nodes}
        new_selfw = {c: 0.0 for c in new_nodes}
        for u in nodes:
            cu = relabel[com[u]]
            new_selfw[cu] += selfw[u]
            for v, w in adj[u].items():
                cv = relabel[com[v]]
                if cu == cv:
                    if u < v:
                        new_selfw[cu] += w
                else:
                    new_adj[cu][cv] = new_adj[cu].get(cv, 0.0) + w
        membership = {orig: relabel[com[membership[orig]]] for orig in original_nodes}
        nodes, adj, selfw = new_nodes, new_adj, new_selfw

    membership = {orig: com[membership[orig]] for orig in original_nodes}
    # Deterministic labels: communities ordered by smallest original member.
    groups: dict[int, list[int]] = {}
    for node in original_nodes:
        groups.setdefault(membership[node], []).append(node)
    ordered = sorted(groups.values(), key=lambda members: members[0])
    assignment = {}
    for label, members in enumerate(ordered):
        for node in members:
            assignment[node] = label
    return assignment, q_history


def detect_communities(graph: KnowledgeGraph) -> list[Community]:
    """Cluster the graph and store the partition on it."""
    if not graph.entities:
        graph.communities = []
        return []
    adjacency = build_adjacency(graph)
    assignment, _ = louvain_partition(adjacency)
    members: dict[int, set[int]] = {}
    for node, label in assignment.items():
        members.setdefault(label, set()).add(node)
    communities = []
    for label in sorted(members):
        member_set = frozenset(members[label])
        internal = sum(
            r.weight
            for r in graph.relations.values()
            if r.source in member_set and r.target in member_set
        )
        communities.append(Community(id=label, members=member_set, internal_weight=internal))
    graph.communities = communities
    # Rebuild the summary view from the membership-keyed cache so ids stay
    # aligned with the fresh partition.
    graph.community_summaries = {}
    for community in communities:
        cached = graph._summary_cache.get(community.members)
        if cached is not None:
            graph.community_summaries[community.id] = cached
    return communities


# ---------------------------------------------------------------------------
# Summaries, context synthesis, graph query
# ---------------------------------------------------------------------------


def _render_relation(graph: KnowledgeGraph, relation: Relation) -> str:
    src = graph.entities[relation.source].canonical_name
    dst = graph.entities[relation.target].canonical_name
    return f"{src} -[{relation.label}]-> {dst}"


def render_entity(graph: KnowledgeGraph, entity: Entity) -> str:
    """One retrieval document per entity: name, description, incident relations."""
    parts = [entity.canonical_name]
    if entity.description:
        parts.append(f": {entity.description}")
    incident = sorted(graph.neighbors(entity.id), key=lambda r: r.key())
    if incident:
        rendered = "; ".join(_render_relation(graph, r) for r in incident)
        parts.append(f". Relations: {rendered}")
    return "".join(parts)


def fallback_summary(graph: KnowledgeGraph, community: Community) -> str:
    names = [graph.entities[m].canonical_name for m in sorted(community.members)]
    return "Entities: " + ", ".join(names)


def summarize_community(graph: KnowledgeGraph, community: Community, providers) -> str:
    """Summarize one community; cached by membership so unchanged groups are free."""
    for member in community.members:
        if member not in graph.entities:
            raise ValueError(f"community member {member} not in graph")
    fingerprint = community.members
    cached = graph._summary_cache.get(fingerprint)
    if cached is not None:
        graph.community_summaries[community.id] = cached
        return cached

    lines = ["Summarize this group of related entities in two or three sentences.", "", "Entities:"]
    for member in sorted(community.members):
        entity = graph.entities[member]
        desc = f" - {entity.description}" if entity.description else ""
        lines.append(f"- {entity.canonical_name}{desc}")
    intra = [
        r
        for r in sorted(graph.relations.values(), key=lambda r: r.key())
        if r.source in community.members and r.target in community.members
    ]
    if intra:
        lines.append("Relations:")
        lines.extend(f"- {_render_relation(graph, r)}" for r in intra)
    request = ChatRequest(
        role="graph_construction",
        messages=[Message(role="user", content="\n".join(lines))],
    )
    try:
        summary = providers.chat(request).text
    except ProviderError as exc:
        logger.warning("community summary failed, using fallback: %s", exc)
        summary = fallback_summary(graph, community)
        graph.community_summaries[community.id] = summary
        return summary
    graph.community_summaries[community.id] = summary
    graph._summary_cache[fingerprint] = summary
    return summary


def synthesize_context(graph: KnowledgeGraph, providers) -> str:
    """Combine current community summaries into one reasoning-context paragraph."""
    if not graph.entities:
        return ""
    if graph.communities is None:
        detect_communities(graph)
    summaries = [
        summarize_community(graph, community, providers)
        for community in graph.communities
    ]
    prompt = (
        "Combine the following topic summaries into a single short paragraph "
        "of reasoning context:\n\n" + "\n".join(f"- {s}" for s in summaries)
    )
    request = ChatRequest(
        role="graph_construction",
        messages=[Message(role="user", content=prompt)],
    )
    try:
        return providers.chat(request).text
    except ProviderError as exc:
        logger.warning("context synthesis failed, concatenating summaries: %s", exc)
        return "\n".join(summaries)


def query_graph(graph: KnowledgeGraph, question: str, providers) -> str:
    """Answer a question from the graph via retrieval over entity renderings."""
    if not question:
        raise ValueError("question must be nonempty")
    if not graph.entities:
        return MEMORY_EMPTY
    corpus = [
        rag.Chunk(doc_id=f"entity:{entity.id}", index=0, text=render_entity(graph, entity))
        for entity in sorted(graph.entities.values(), key=lambda e: e.id)
    ]
    corpus.extend(
        rag.Chunk(doc_id=f"community:{cid}", index=0, text=summary)
        for cid, summary in sorted(graph.community_summaries.items())
    )
    hits = rag.retrieve_top_k(question, corpus, QUERY_TOP_K, providers)
    return rag.generate_grounded_answer(
        question, hits, "", providers, role="graph_construction"
    )
