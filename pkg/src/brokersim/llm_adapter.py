"""Natural-language layer over the negotiation engine.

Renders the broker system prompt and per-round notes, talks to a generic
chat-completion endpoint, and parses free-text carrier replies into structured
turns.  Every dollar figure the broker utters comes from the strategy engine;
carrier text never reaches the pricing path except as a ParsedTurn.
"""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass
from enum import Enum

import requests

from .carrier import PERSONAS
from .domain import Load, ProtocolConfig, Rate
from .pricing import ShiftSchedule, apply_shift
from .protocol import Outcome, OutcomeStatus, detect_retractions
from .strategy import broker_score, make_strategy

BROKER_PROMPT_TEMPLATE = """\
You are a professional freight broker negotiating
rates with a carrier.

## Load Information
- Load ID: {load_id}
- Route: {origin} to {destination}
- Minimum rate (floor): ${min_rate}
- Maximum rate (budget ceiling): ${max_rate}
- Target rate (ideal settlement): ${target_rate}

## Negotiation Structure
- This negotiation has a maximum of 10 rounds.
- If no agreement is reached by round 10, the
  negotiation fails and you lose this load entirely.
- You will be told the current round number at
  the start of each turn.

## Your Objective
Negotiate the lowest possible rate for this load.
Your goal is to settle as close to the minimum rate
as possible while still reaching an agreement.

## Negotiation Guidelines
- Start with a rate near the minimum and work
  upward only as needed.
- Make concessions gradually. Do not jump to your
  maximum budget.
- The target rate represents a good outcome.
  Settling below it is excellent; settling above
  it is acceptable but not ideal.
- Never exceed the maximum rate under any
  circumstances. If the carrier will not go below
  this amount, walk away.
- Never reveal your maximum budget or target rate.
- Always state your proposed rate as a dollar
  amount (e.g., "$1,450").
- Keep responses concise (2-4 sentences).
- If you agree to a rate, say "I accept" or "deal".
- If you need to walk away, say "I'll have to pass".

## Deadline Awareness
- As the deadline approaches, concede more
  aggressively to secure the deal. A closed deal
  at a higher rate is better than no deal.
- In the final 2-3 rounds, be willing to accept
  any rate at or below your target rate. If the
  carrier is close, meet them to close the deal.
- Losing a load costs more than paying a slightly
  higher rate.

## Important
- You must decide your own counter-offers. There
  is no external tool or calculator to help you.
  Use your judgment.
- Be professional and maintain a good relationship
  with the carrier."""

ROUND_NOTE_TEMPLATE = "[Round {k} of {total}. You have {remaining} round(s) remaining.]"

BROKER_TEMPERATURE = 0.7
CARRIER_TEMPERATURE = 0.3


def format_money(x: float) -> str:
    """$-amount body: comma-grouped dollars, cents only when non-integral."""
    if x < 0:
        raise ValueError("negative amount")
    cents = round(x * 100)
    whole, frac = divmod(cents, 100)
    body = f"{whole:,}"
    return body if frac == 0 else f"{body}.{frac:02d}"


def round_note(k: int, total: int = 10) -> str:
    if not 1 <= k <= total:
        raise ValueError(f"round {k} outside 1..{total}")
    return ROUND_NOTE_TEMPLATE.format(k=k, total=total, remaining=total - k)


_PLACEHOLDER_RE = re.compile(r"\{[a-z_]+\}")


@dataclass(frozen=True)
class PromptBundle:
    system_prompt: str = BROKER_PROMPT_TEMPLATE
    round_note_template: str = ROUND_NOTE_TEMPLATE

    def render(self, load: Load) -> str:
        for name in ("id", "origin", "destination"):
            if not getattr(load, name):
                raise ValueError(f"load.{name} must be non-empty")
        text = self.system_prompt.format(
            load_id=load.id,
            origin=load.origin,
            destination=load.destination,
            min_rate=format_money(load.r_min),
            max_rate=format_money(load.r_max),
            target_rate=format_money(load.r_target),
        )
        leftover = _PLACEHOLDER_RE.search(text)
        if leftover:
            raise ValueError(f"unresolved placeholder {leftover.group()}")
        return text


def render_broker_prompt(load: Load, bundle: PromptBundle | None = None) -> str:
    return (bundle or PromptBundle()).render(load)


@dataclass(frozen=True)
class PersonaPrompt:
    persona: str
    opening_pct: float
    floor_pct: float
    walkaway_rule: str
    max_concession_rule: str
    temperature: float = CARRIER_TEMPERATURE


PERSONA_PROMPTS = {
    "cooperative": PersonaPrompt("cooperative", 30, 2, "Never", "8%"),
    "tft": PersonaPrompt("tft", 60, 0, "3 stalls", "Mirror"),
    "deadline": PersonaPrompt("deadline", 70, 0, "Never", "0.5/12%"),
    "anchoring": PersonaPrompt("anchoring", 95, 0, "Rd 9", "2%"),
    "hardliner": PersonaPrompt("hardliner", 90, 0, "Rd 8", "1/8%"),
}

_PERSONA_STYLE = {
    "cooperative": "You want this freight moved and will meet a fair offer quickly.",
    "tft": "You mirror the broker: concede roughly what their last move conceded.",
    "deadline": "You hold your number early and drop sharply only near the deadline.",
    "anchoring": "You anchor very high, drop once to reset expectations, then inch down.",
    "hardliner": "You barely move and expect the broker to come to you.",
}


def render_carrier_prompt(carrier_key: str, load: Load) -> str:
    """System prompt for a carrier persona.

    The bracketed trailer carries the persona key and the rate band in
    machine-readable form so a scripted endpoint can reproduce the matching
    rule-based carrier without holding any per-conversation state.
    """
    if carrier_key not in PERSONA_PROMPTS:
        raise ValueError(f"unknown carrier key: {carrier_key!r}")
    persona = PERSONA_PROMPTS[carrier_key]
    params = PERSONAS[carrier_key]
    opening = load.r_min + params.open_frac * load.band
    floor = load.r_min + params.floor_frac * load.band
    return (
        f"You are a freight carrier quoting load {load.id} "
        f"({load.origin} to {load.destination}).\n"
        f"Open at ${format_money(opening)}. Never quote below ${format_money(floor)}.\n"
        f"{_PERSONA_STYLE[carrier_key]}\n"
        f"Walk-away rule: {persona.walkaway_rule}. "
        f"Max concession per round: {persona.max_concession_rule}.\n"
        'Always state your rate as a dollar amount. Say "I accept" to close '
        'or "I\'ll have to pass" to end the talk.\n'
        f"[sim] persona={carrier_key} r_min={load.r_min!r} r_max={load.r_max!r}"
    )


class TurnIntent(Enum):
    ACCEPT = "accept"
    COUNTER = "counter"
    PASS = "pass"


@dataclass(frozen=True)
class ParsedTurn:
    intent: TurnIntent
    rate: Rate | None = None

    def __post_init__(self) -> None:
        if self.intent is TurnIntent.COUNTER and self.rate is None:
            raise ValueError("counter turn requires a rate")


class AdapterError(Exception):
    pass


class TurnParseError(AdapterError):
    pass


class TransportError(AdapterError):
    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class EndpointTimeoutError(TransportError):
    pass


class MalformedResponseError(AdapterError):
    pass


_AMOUNT_RE = re.compile(r"\$\s?(\d{1,3}(?:,\d{3})+|\d+)(?:\.(\d{1,2}))?")
_ACCEPT_RE = re.compile(r"\bi accept\b|\bdeal\b", re.IGNORECASE)
_PASS_RE = re.compile(r"\bi'?ll have to pass\b|\bpass\b", re.IGNORECASE)


def _last_amount(text: str) -> Rate | None:
    last = None
    for m in _AMOUNT_RE.finditer(text):
        whole = m.group(1).replace(",", "")
        cents = m.group(2)
        last = float(f"{whole}.{cents}" if cents else whole)
    return last


def parse_turn(text: str) -> ParsedTurn:
    """Classify a free-text turn.  Accept beats Pass beats Counter; a counter
    takes the last well-formed dollar amount in the message."""
    amount = _last_amount(text)
    if _ACCEPT_RE.search(text):
        return ParsedTurn(TurnIntent.ACCEPT, amount)
    if _PASS_RE.search(text):
        return ParsedTurn(TurnIntent.PASS, amount)
    if amount is None:
        raise TurnParseError(f"no dollar amount in turn: {text[:80]!r}")
    return ParsedTurn(TurnIntent.COUNTER, amount)


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str = "mock-model"
    temperature: float = CARRIER_TEMPERATURE
    timeout_s: float = 30.0
    max_retries: int = 3
    backoff_base_s: float = 0.25
    backoff_factor: float = 2.0
    max_response_chars: int = 4000

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ValueError("base_url required")
        if self.max_retries < 0 or self.timeout_s <= 0:
            raise ValueError("max_retries must be >= 0 and timeout_s > 0")

    @classmethod
    def from_env(cls, **overrides) -> "EndpointConfig":
        env = {
            "base_url": os.environ.get("BROKERSIM_LLM_BASE_URL"),
            "model": os.environ.get("BROKERSIM_LLM_MODEL"),
            "temperature": os.environ.get("BROKERSIM_LLM_TEMPERATURE"),
            "timeout_s": os.environ.get("BROKERSIM_LLM_TIMEOUT_S"),
        }
        kwargs = {k: v for k, v in env.items() if v is not None}
        for k in ("temperature", "timeout_s"):
            if k in kwargs:
                kwargs[k] = float(kwargs[k])
        kwargs.update(overrides)
        return cls(**kwargs)


def chat_complete(
    config: EndpointConfig,
    messages: list[dict],
    temperature: float | None = None,
) -> str:
    """One assistant message from a chat-completion endpoint.

    Connection failures, timeouts, and 5xx responses are retried with
    exponential backoff up to max_retries; other HTTP errors and malformed
    bodies fail immediately.
    """
    url = config.base_url.rstrip("/") + "/chat/completions"
    payload = {
        "model": config.model,
        "temperature": config.temperature if temperature is None else temperature,
        "messages": list(messages),
    }
    attempts = config.max_retries + 1
    last_failure = ""
    timed_out = False
    for attempt in range(attempts):
        if attempt:
            time.sleep(config.backoff_base_s * config.backoff_factor ** (attempt - 1))
        try:
            resp = requests.post(url, json=payload, timeout=config.timeout_s)
        except requests.Timeout as exc:
            timed_out = True
            last_failure = f"timeout: {exc}"
            continue
        except requests.ConnectionError as exc:
            timed_out = False
            last_failure = f"connection: {exc}"
            continue
        if resp.status_code >= 500:
            timed_out = False
            last_failure = f"server error HTTP {resp.status_code}"
            continue
        if resp.status_code != 200:
            raise TransportError(
                f"endpoint rejected request: HTTP {resp.status_code}",
                attempts=attempt + 1,
            )
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(f"bad completion body: {exc}") from exc
        if not isinstance(content, str):
            raise MalformedResponseError("completion content is not a string")
        return content[: config.max_response_chars]
    err_cls = EndpointTimeoutError if timed_out else TransportError
    raise err_cls(
        f"gave up after {attempts} attempt(s); last failure: {last_failure}",
        attempts=attempts,
    )


@dataclass(frozen=True)
class TurnRecord:
    round: int
    role: str              # "broker" | "carrier"
    text: str
    rate: Rate | None
    source: str            # "engine" for broker rates, "llm" for carrier text

    def to_dict(self) -> dict:
        return {
            "round": self.round, "role": self.role, "text": self.text,
            "rate": self.rate, "source": self.source,
        }


@dataclass(frozen=True)
class LlmNegotiationResult:
    load: Load
    strategy: str
    carrier: str
    outcome: Outcome
    turns: tuple
    engine_rates: tuple    # every dollar figure the engine authorized, in order

    def broker_amounts(self) -> list[Rate]:
        out = []
        for turn in self.turns:
            if turn.role == "broker":
                out.extend(
                    _last_amount(m.group(0)) for m in _AMOUNT_RE.finditer(turn.text)
                )
        return out


_PARSE_NUDGE = (
    "I could not read a rate in that. Please restate with a single dollar "
    'amount, or say "I accept" or "I\'ll have to pass".'
)


def run_llm_negotiation(
    load: Load,
    carrier_key: str,
    schedule: ShiftSchedule | None,
    endpoint: EndpointConfig,
    config: ProtocolConfig | None = None,
    strategy_key: str = "two-index",
    c: float | None = None,
    rng=None,
    parse_retries: int = 1,
) -> LlmNegotiationResult:
    """Run one negotiation where the carrier side is a chat endpoint.

    The broker remains the strategy engine with template-rendered messages:
    the engine picks every rate, the adapter only formats text and parses the
    carrier's replies.  Unparseable carrier turns are re-requested up to
    parse_retries times, then raised.
    """
    config = config or ProtocolConfig()
    broker = make_strategy(strategy_key, load, config, rng=rng, c=c)
    messages = [{"role": "system", "content": render_carrier_prompt(carrier_key, load)}]
    turns: list[TurnRecord] = []
    engine_rates: list[Rate] = []
    sent_offers: list[Rate] = []
    current = load
    standing: Rate | None = None
    outcome: Outcome | None = None

    for t in range(1, config.max_rounds + 1):
        event = schedule.event_at(t) if schedule else None
        if event is not None:
            current = apply_shift(current, event)
            broker.apply_shift(t, current.r_target)

        candidate = broker.compute_offer(t)

        if standing is not None:
            rng_range = current.r_target - current.r_min
            if broker_score(standing, current.r_target, rng_range) >= broker_score(
                candidate, current.r_target, rng_range
            ):
                engine_rates.append(standing)
                text = f"Deal. ${format_money(standing)} for load {load.id}."
                turns.append(TurnRecord(t, "broker", text, standing, "engine"))
                outcome = _llm_outcome(
                    OutcomeStatus.AGREED, t, broker, sent_offers, config,
                    agreed_rate=standing, accepted_by="broker",
                )
                break

        broker.commit_offer(t, candidate)
        sent_offers.append(candidate)
        engine_rates.append(candidate)
        text = f"We can do ${format_money(candidate)} for load {load.id}."
        turns.append(TurnRecord(t, "broker", text, candidate, "engine"))
        messages.append({
            "role": "user",
            "content": f"{round_note(t, config.max_rounds)}\n{text}",
        })

        reply = chat_complete(endpoint, messages)
        parsed: ParsedTurn | None = None
        for attempt in range(parse_retries + 1):
            try:
                parsed = parse_turn(reply)
                break
            except TurnParseError:
                if attempt == parse_retries:
                    raise
                messages.append({"role": "assistant", "content": reply})
                messages.append({"role": "user", "content": _PARSE_NUDGE})
                reply = chat_complete(endpoint, messages)
        messages.append({"role": "assistant", "content": reply})
        turns.append(TurnRecord(t, "carrier", reply, parsed.rate, "llm"))

        if parsed.intent is TurnIntent.ACCEPT:
            outcome = _llm_outcome(
                OutcomeStatus.AGREED, t, broker, sent_offers, config,
                agreed_rate=candidate, accepted_by="carrier",
            )
            break
        if parsed.intent is TurnIntent.PASS:
            outcome = _llm_outcome(
                OutcomeStatus.WALKED_AWAY, t, broker, sent_offers, config
            )
            break
        standing = parsed.rate
        broker.observe_carrier(t, parsed.rate)

    if outcome is None:
        outcome = _llm_outcome(
            OutcomeStatus.DEADLINE_EXPIRED, config.max_rounds, broker,
            sent_offers, config,
        )

    return LlmNegotiationResult(
        load=load,
        strategy=strategy_key,
        carrier=carrier_key,
        outcome=outcome,
        turns=tuple(turns),
        engine_rates=tuple(engine_rates),
    )


def _llm_outcome(status, rounds_used, broker, sent_offers, config,
                 agreed_rate=None, accepted_by=None) -> Outcome:
    return Outcome(
        status=status,
        rounds_used=rounds_used,
        agreed_rate=agreed_rate,
        accepted_by=accepted_by,
        retraction_count=detect_retractions(sent_offers, config.retraction_epsilon),
        hold_count=broker.hold_count,
    )
