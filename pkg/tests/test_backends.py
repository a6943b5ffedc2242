import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from zoomrl.backends import (
    GenerationRequest,
    GenerationResponse,
    HttpBackend,
    HttpSrClient,
    ImagePart,
    Message,
    ScriptedBackend,
    StochasticMockBackend,
    TextPart,
    request_from_wire,
    request_to_wire,
    response_from_wire,
    response_to_wire,
)
from zoomrl.errors import TransportError
from zoomrl.images import ppm_bytes, read_ppm_bytes
from zoomrl.parsing import parse_response


def simple_request(make_image):
    return GenerationRequest(
        messages=(
            Message(role="system", parts=(TextPart("be precise"),)),
            Message(
                role="user",
                parts=(ImagePart(image=make_image(6, 4)), TextPart("how many?")),
            ),
        ),
        temperature=0.09,
        top_p=0.95,
        stop=("</think>",),
        seed=7,
    )


class TestWireCoding:
    def test_request_round_trip(self, make_image):
        request = simple_request(make_image)
        wire = request_to_wire(request)
        again = request_from_wire(wire)
        assert again.temperature == request.temperature
        assert again.top_p == request.top_p
        assert again.stop == request.stop
        assert again.seed == 7
        assert again.messages[0] == request.messages[0]
        image_part = again.messages[1].parts[0]
        assert image_part.image == request.messages[1].parts[0].image

    def test_wire_shape_is_json_serializable(self, make_image):
        wire = request_to_wire(simple_request(make_image))
        encoded = json.dumps(wire)
        decoded = json.loads(encoded)
        assert decoded["messages"][0]["content"][0] == {"type": "text", "text": "be precise"}
        assert decoded["messages"][1]["content"][0]["type"] == "image"
        assert decoded["messages"][1]["content"][0]["format"] == "ppm"

    def test_response_round_trip(self):
        response = GenerationResponse(text="hi", tokens=(1, 2), logprobs=(-0.5, -1.0))
        assert response_from_wire(response_to_wire(response)) == response

    def test_response_without_logprobs(self):
        response = response_from_wire({"text": "plain"})
        assert response.tokens is None and response.logprobs is None


class _CannedHandler(BaseHTTPRequestHandler):
    canned: dict = {"text": "<think>ok</think>"}
    fail_times = 0
    requests_seen: list = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = self.rfile.read(length)
        type(self).requests_seen.append(body)
        if type(self).fail_times > 0:
            type(self).fail_times -= 1
            self.send_response(500)
            self.end_headers()
            return
        payload = json.dumps(type(self).canned).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def http_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _CannedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _CannedHandler.requests_seen = []
    _CannedHandler.fail_times = 0
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


class TestHttpBackend:
    def test_round_trip_over_real_socket(self, http_server, make_image):
        _CannedHandler.canned = {"text": "<think>served</think>", "tokens": [3, 4],
                                 "logprobs": [-0.1, -0.2]}
        backend = HttpBackend(http_server)
        response = backend.generate(simple_request(make_image))
        assert response.text == "<think>served</think>"
        assert response.tokens == (3, 4)
        sent = json.loads(_CannedHandler.requests_seen[-1])
        assert sent["temperature"] == 0.09
        assert sent["stop"] == ["</think>"]

    def test_retry_once_then_succeed(self, http_server, make_image):
        _CannedHandler.canned = {"text": "recovered"}
        _CannedHandler.fail_times = 1
        backend = HttpBackend(http_server)
        assert backend.generate(simple_request(make_image)).text == "recovered"

    def test_transport_error_after_retries(self, http_server, make_image):
        _CannedHandler.fail_times = 5
        backend = HttpBackend(http_server, retries=1)
        with pytest.raises(TransportError):
            backend.generate(simple_request(make_image))

    def test_unreachable_endpoint(self, make_image):
        backend = HttpBackend("http://127.0.0.1:1", timeout=0.2, retries=0)
        with pytest.raises(TransportError):
            backend.generate(simple_request(make_image))


class _SrHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers["Content-Length"])
        image = read_ppm_bytes(self.rfile.read(length))
        target = int(self.headers["X-Target-Min-Side"])
        from zoomrl.images import scale_factor, upscale_nearest

        out = upscale_nearest(image, scale_factor(image, target))
        payload = ppm_bytes(out)
        self.send_response(200)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


class TestHttpSrClient:
    def test_upscale_over_real_socket(self, make_image):
        server = ThreadingHTTPServer(("127.0.0.1", 0), _SrHandler)
        threading.Thread(target=server.serve_forever, daemon=True).start()
        try:
            client = HttpSrClient(f"http://127.0.0.1:{server.server_address[1]}")
            out = client.upscale(make_image(10, 10), 30)
            assert (out.width, out.height) == (30, 30)
        finally:
            server.shutdown()

    def test_unreachable_service(self, make_image):
        client = HttpSrClient("http://127.0.0.1:1", timeout=0.2)
        with pytest.raises(TransportError):
            client.upscale(make_image(4, 4), 8)


class TestJudgeWire:
    def test_judge_handle_over_real_socket(self, http_server, make_image, tmp_path):
        """The judge wire contract is the same chat shape as backends,
        including base64 image parts for the difficulty role."""
        from zoomrl.evaluation import stratify
        from zoomrl.images import write_ppm
        from zoomrl.judges import ROLE_DIFFICULTY, JudgeHandle, http_transport
        from zoomrl.types import Sample

        image_path = tmp_path / "img.ppm"
        write_ppm(make_image(8, 8), image_path)
        sample = Sample(
            id="w1", image_path=str(image_path), question="How many?", ground_truth="2",
            task_type="counting", gt_count=2,
        )
        _CannedHandler.canned = {"text": '{"reasoning": "small", "zoom_score": 8}'}
        judge = JudgeHandle(role=ROLE_DIFFICULTY, transport=http_transport(http_server))
        assert stratify(sample, judge) == "hard"
        sent = json.loads(_CannedHandler.requests_seen[-1])
        roles = [m["role"] for m in sent["messages"]]
        assert roles == ["system", "user"]
        kinds = [p["type"] for p in sent["messages"][1]["content"]]
        assert kinds == ["image", "text"]
        assert "Visual Information Analyst" in sent["messages"][0]["content"][0]["text"]

    def test_judge_transport_error_maps(self, make_image):
        from zoomrl.judges import ROLE_RUBRIC, JudgeHandle, http_transport

        judge = JudgeHandle(
            role=ROLE_RUBRIC, transport=http_transport("http://127.0.0.1:1", timeout=0.2)
        )
        with pytest.raises(TransportError):
            judge.invoke(question="q", ground_truth="g", answer="a")


class TestScriptedBackend:
    script = {
        "by_question": {
            "How many buses are in the picture?": {
                "round1": ["<think>r1</think>"],
                "round2": ["<rethink>r2</rethink><answer>4</answer>"],
            }
        },
        "default": {"round1": ["<think>d1</think>"], "round2": ["<answer>d</answer>"]},
    }

    def request(self, question, with_assistant=False):
        messages = [Message(role="user", parts=(TextPart(question),))]
        if with_assistant:
            messages.append(Message(role="assistant", parts=(TextPart("<think>r1</think>"),)))
        return GenerationRequest(messages=tuple(messages))

    def test_question_routing_and_round_detection(self):
        backend = ScriptedBackend(self.script)
        r1 = backend.generate(self.request("How many buses are in the picture?"))
        r2 = backend.generate(self.request("How many buses are in the picture?", True))
        assert r1.text == "<think>r1</think>"
        assert "answer" in r2.text

    def test_default_fallback(self):
        backend = ScriptedBackend(self.script)
        assert backend.generate(self.request("something else")).text == "<think>d1</think>"

    def test_seed_selects_entry(self):
        script = {"default": {"round1": ["a", "b", "c"], "round2": ["x"]}}
        backend = ScriptedBackend(script)
        texts = [
            backend.generate(
                GenerationRequest(
                    messages=(Message(role="user", parts=(TextPart("q"),)),), seed=seed
                )
            ).text
            for seed in (0, 1, 2, 3)
        ]
        assert texts == ["a", "b", "c", "a"]

    def test_no_match_no_default_raises(self):
        backend = ScriptedBackend({"by_question": {}})
        with pytest.raises(TransportError):
            backend.generate(self.request("q"))


class TestStochasticMock:
    def test_same_seed_same_output(self, make_image):
        backend = StochasticMockBackend()
        request = GenerationRequest(
            messages=(
                Message(role="user", parts=(ImagePart(image=make_image()), TextPart("q"))),
            ),
            seed=42,
        )
        assert backend.generate(request).text == backend.generate(request).text

    def test_different_seeds_vary(self, make_image):
        backend = StochasticMockBackend()
        texts = set()
        for seed in range(8):
            request = GenerationRequest(
                messages=(
                    Message(role="user", parts=(ImagePart(image=make_image()), TextPart("q"))),
                ),
                seed=seed,
            )
            texts.add(backend.generate(request).text)
        assert len(texts) > 1

    def test_round2_produces_rethink_and_answer(self, make_image):
        backend = StochasticMockBackend()
        request = GenerationRequest(
            messages=(
                Message(role="user", parts=(TextPart("q"),)),
                Message(role="assistant", parts=(TextPart("<think>x</think>"),)),
            ),
            seed=3,
        )
        parsed = parse_response(backend.generate(request).text)
        assert parsed.ordering_ok["rethink"]
        assert parsed.ordering_ok["answer"]

    def test_logprobs_emitted_when_enabled(self, make_image):
        backend = StochasticMockBackend(emit_logprobs=True)
        assert backend.capabilities.returns_logprobs
        request = GenerationRequest(
            messages=(Message(role="user", parts=(TextPart("q"),)),), seed=1
        )
        response = backend.generate(request)
        assert response.tokens is not None
        assert all(lp <= 0 for lp in response.logprobs)
