import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from featevolve.agents import (
    AgentSuite, ChatMessage, CodeProposal, Critique, FeatureProposal, Forfeit, HttpProvider,
    IdeaProposal, ProviderConfig, Refined, ScriptedProvider, load_templates, parse_agent_output,
    precheck_code, refine_loop, splice_program,
)
from featevolve.agents.providers import temperature_for
from featevolve.demo import agent_reply, critic_reply
from featevolve.errors import ConfigError, OutputParseError, ScriptExhaustedError, TransportError
from featevolve.knowledge_base import KnowledgeBase
from featevolve.memory import NO_NEIGHBORS_TEXT

from conftest import TOY_COLUMNS, make_schema

SCHEMA = make_schema(TOY_COLUMNS)
MSG = [ChatMessage("user", "hi")]
FEATURE = {"name": "sessions_last_3d", "reason": "r", "summary": "s", "pseudocode": "p"}


def script(root, role, *replies, default=None):
    d = root / role
    d.mkdir(parents=True, exist_ok=True)
    for i, text in enumerate(replies):
        (d / f"{i:03d}.txt").write_text(text)
    if default is not None:
        (d / "default.txt").write_text(default)


def suite(root):
    cfg = ProviderConfig("scripted", str(root))
    return AgentSuite(ScriptedProvider(root), cfg, load_templates(), SCHEMA)


# -- providers -------------------------------------------------------------------------


def test_scripted_replay_and_exhaustion(tmp_path):
    script(tmp_path, "idea_proposer", "first", "second")
    p = ScriptedProvider(tmp_path)
    assert [p.complete(MSG, "idea_proposer", i, 0.7) for i in (0, 1)] == ["first", "second"]
    with pytest.raises(ScriptExhaustedError):
        p.complete(MSG, "idea_proposer", 2, 0.7)
    script(tmp_path, "evaluator", "one", default="again")
    assert p.complete(MSG, "evaluator", 5, 0.7) == "again"
    (tmp_path / "feature_proposer" / "idea_2").mkdir(parents=True)
    assert p.resolve_role("feature_proposer", "idea_2") == "feature_proposer/idea_2"
    assert p.resolve_role("feature_proposer", "idea_3") == "feature_proposer"
    with pytest.raises(ConfigError):
        ScriptedProvider(tmp_path / "missing")


def test_temperatures():
    cfg = ProviderConfig("scripted", "x")
    assert temperature_for(cfg, "code_agent") == 0.2
    assert temperature_for(cfg, "feature_proposer/idea_1") == 0.7
    cfg.temperature = 0.0
    assert temperature_for(cfg, "feature_proposer") == 0.0


class _Flaky(BaseHTTPRequestHandler):
    plan: list = []
    bodies: list = []

    def do_POST(self):
        body = self.rfile.read(int(self.headers["Content-Length"]))
        type(self).bodies.append(json.loads(body))
        code = type(self).plan.pop(0)
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        if code == 200:
            self.wfile.write(json.dumps({"choices": [{"message": {"content": "hello"}}]}).encode())

    def log_message(self, *args):
        pass


@pytest.fixture
def http_server():
    server = HTTPServer(("127.0.0.1", 0), _Flaky)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/v1/chat/completions"
    server.shutdown()


def test_http_retries_then_succeeds(http_server):
    _Flaky.plan, _Flaky.bodies = [500, 500, 200], []
    cfg = ProviderConfig("http", endpoint_url=http_server, model_name="m", max_retries=3, backoff_seconds=0.01)
    assert HttpProvider(cfg).complete(MSG, "code_agent", 0, 0.2) == "hello"
    assert len(_Flaky.bodies) == 3
    assert _Flaky.bodies[0] == {"model": "m", "messages": [{"role": "user", "content": "hi"}], "temperature": 0.2}


def test_http_gives_up(http_server):
    _Flaky.plan, _Flaky.bodies = [500, 500], []
    cfg = ProviderConfig("http", endpoint_url=http_server, model_name="m", max_retries=1, backoff_seconds=0.01)
    with pytest.raises(TransportError):
        HttpProvider(cfg).complete(MSG, "code_agent", 0, 0.2)
    _Flaky.plan, _Flaky.bodies = [400], []
    with pytest.raises(TransportError):
        HttpProvider(ProviderConfig("http", endpoint_url=http_server, model_name="m")).complete(MSG, "x", 0, 0.2)
    assert len(_Flaky.bodies) == 1


def test_http_config_checks(monkeypatch):
    with pytest.raises(ConfigError):
        ProviderConfig("http", endpoint_url="http://x")
    monkeypatch.delenv("NO_SUCH_KEY_VAR", raising=False)
    with pytest.raises(ConfigError):
        HttpProvider(ProviderConfig("http", endpoint_url="http://x", model_name="m", api_key_env_var="NO_SUCH_KEY_VAR"))


# -- parsing -----------------------------------------------------------------------------


def test_parse_agent_output_rules():
    trace, p = parse_agent_output("Some prose.\n" + agent_reply(FEATURE), "feature")
    assert p == FeatureProposal("sessions_last_3d", "r", "s", "p") and trace.analyze
    two = agent_reply({"insight": "old"}) + agent_reply({"insight": "new"})
    assert parse_agent_output(two, "idea")[1] == IdeaProposal("new", [])
    with pytest.raises(OutputParseError, match="pseudocode"):
        parse_agent_output(agent_reply({k: v for k, v in FEATURE.items() if k != "pseudocode"}), "feature")
    with pytest.raises(OutputParseError):
        parse_agent_output("no block here", "feature")
    with pytest.raises(OutputParseError):
        parse_agent_output(agent_reply({**FEATURE, "name": "Bad Name"}), "feature")
    assert parse_agent_output(critic_reply("accept"), "critique")[1].accepted
    with pytest.raises(OutputParseError):
        parse_agent_output(critic_reply("reject", ""), "critique")


# -- refine loop ---------------------------------------------------------------------------


def _counting(verdicts):
    calls = {"gen": 0, "crit": 0, "feedback": []}

    def gen(fb):
        calls["gen"] += 1
        calls["feedback"].append(fb)
        return calls["gen"]

    def crit(_):
        calls["crit"] += 1
        v = verdicts.pop(0)
        return Critique("accept") if v else Critique("reject", f"no {calls['crit']}")

    return gen, crit, calls


def test_refine_loop_examples():
    gen, crit, calls = _counting([True])
    assert isinstance(refine_loop(gen, crit, 3), Refined) and (calls["gen"], calls["crit"]) == (1, 1)
    gen, crit, calls = _counting([False, False, True])
    out = refine_loop(gen, crit, 3)
    assert out.value == 3 and calls["feedback"] == [None, "no 1", "no 2"]
    gen, crit, calls = _counting([False, False])
    out = refine_loop(gen, crit, 2)
    assert isinstance(out, Forfeit) and [c.feedback for c in out.history] == ["no 1", "no 2"]

    def broken(_):
        raise OutputParseError("garbled")

    out = refine_loop(broken, crit, 2)
    assert isinstance(out, Forfeit) and "garbled" in out.history[0].feedback


# -- roles ----------------------------------------------------------------------------------


def _kb():
    kb = KnowledgeBase()
    kb.add_idea("Churners go quiet near the end.")
    kb.add_idea("Big spenders stay.")
    return kb


def test_propose_feature(tmp_path):
    script(tmp_path, "feature_proposer", agent_reply(FEATURE), agent_reply(FEATURE))
    agents, kb = suite(tmp_path), _kb()
    p = agents.propose_feature(kb.idea(0), "short", "long")
    assert p.name == "sessions_last_3d"
    prompt = agents.calls[-1].prompt
    assert "Churners go quiet near the end." in prompt
    assert all(c in prompt for c, _ in TOY_COLUMNS)
    kb.add_feature(0, "sessions_last_3d", "r", "s", "p")
    with pytest.raises(OutputParseError, match="duplicate name"):
        agents.propose_feature(kb.idea(0), "short", "long")


def test_synthesize_and_create(tmp_path):
    script(tmp_path, "idea_synthesizer", agent_reply({"insight": "mix", "parent_ids": [1, 0]}),
           agent_reply({"insight": "mix", "parent_ids": [0, 9]}))
    script(tmp_path, "idea_creator", agent_reply({"insight": "fresh"}),
           agent_reply({"insight": "fresh", "parent_ids": [0]}))
    agents, kb = suite(tmp_path), _kb()
    assert agents.synthesize_idea(kb, "") == IdeaProposal("mix", [0, 1])
    prompt = agents.calls[-1].prompt
    assert "Idea 0 [prior] visits=0" in prompt and "Idea 1 [prior] visits=0" in prompt and "ucb=inf" in prompt
    with pytest.raises(OutputParseError):
        agents.synthesize_idea(kb, "")
    assert agents.create_idea(KnowledgeBase(), "") == IdeaProposal("fresh", [])
    assert all(c in agents.calls[-1].prompt for c, _ in TOY_COLUMNS)
    with pytest.raises(OutputParseError):
        agents.create_idea(kb, "")


def test_generate_code_contracts(tmp_path):
    prior = "feature a = count()\nfeature b = sum(v)\n"
    script(tmp_path, "code_agent",
           agent_reply({"program_text": "feature sessions_last_3d = count() window last 3 days\n"}),
           agent_reply({"program_text": prior + "feature sessions_last_3d = count() window last 3 days\n"}),
           agent_reply({"program_text": "feature sessions_last_3d = count() window last 3 days\n"}))
    agents, kb = suite(tmp_path), _kb()
    feat = FeatureProposal(**FEATURE)
    first = agents.generate_code(feat, kb.idea(0), "")
    assert first.program_text.count("feature ") == 1
    full = agents.generate_code(feat, kb.idea(0), prior, critic_feedback="please use a window")
    assert "please use a window" in agents.calls[-1].prompt and "p" in agents.calls[-1].prompt
    assert full.program_text.startswith(prior) and full.program_text.count("feature ") == 3
    spliced = agents.generate_code(feat, kb.idea(0), prior)
    assert spliced.program_text.startswith(prior) and spliced.program_text.count("feature ") == 3


def test_precheck_and_code_critic(tmp_path):
    prior = "feature a = count()\n"
    assert precheck_code(prior + "feature b = sum(v)\n", SCHEMA, prior, "b") is None
    assert "engine" in precheck_code("feature b = sum(", SCHEMA, prior, "b")
    assert "copied unchanged" in precheck_code("feature a = sum(v)\nfeature b = count()\n", SCHEMA, prior, "b")
    assert "named" in precheck_code(prior + "feature c = count()\n", SCHEMA, prior, "b")
    assert "exactly" in precheck_code(prior + "feature b = count()\nfeature c = count()\n", SCHEMA, prior, "b")
    assert splice_program("feature b = count()\n", prior) == prior + "feature b = count()\n"
    assert splice_program("garbage(", prior) == "garbage("

    script(tmp_path, "code_critic", critic_reply("accept"), critic_reply("reject", ""))
    agents = suite(tmp_path)
    feat = FeatureProposal("b", "r", "s", "p")
    bad = agents.critique_code(CodeProposal("feature b = sum("), feat, prior)
    assert bad.verdict == "reject" and agents.calls == []
    ok = agents.critique_code(CodeProposal(prior + "feature b = count()\n"), feat, prior)
    assert ok.accepted and len(agents.calls) == 1
    with pytest.raises(OutputParseError):
        agents.critique_code(CodeProposal(prior + "feature b = count()\n"), feat, prior)


def test_evaluate_and_short_term(tmp_path):
    from featevolve.evaluation import MetricsReport

    script(tmp_path, "evaluator", agent_reply({"text": "windows help"}), agent_reply({"text": "filters hurt"}))
    script(tmp_path, "short_term_memory", agent_reply({"text": "neighbors say hi"}))
    agents, kb = suite(tmp_path), _kb()
    fid = kb.add_feature(0, "x", "r", "sum", "p")
    feat = kb.idea(0).feature(fid)
    m = MetricsReport(0.7, 0.6, 0.5, 0.55, 0.71)
    assert agents.evaluate_summarize(kb.idea(0), feat, m, 0.0123, "").text == "windows help"
    assert "+0.012300" in agents.calls[-1].prompt
    assert agents.evaluate_summarize(kb.idea(0), feat, m, -0.004, "").text == "filters hurt"
    before = len(agents.calls)
    assert agents.build_short_term(kb.idea(0), []).text == NO_NEIGHBORS_TEXT
    assert len(agents.calls) == before
    mem = agents.build_short_term(kb.idea(0), [kb.idea(1)])
    assert mem.text == "neighbors say hi" and mem.source_idea_ids == [1]


def test_templates_validated(tmp_path):
    (tmp_path / "feature_proposer.txt").write_text("no placeholders here")
    with pytest.raises(ConfigError):
        load_templates(tmp_path)
