"""Reference serialized event-token encoding used for the sequence-length comparison.

MIDI-like vocabulary: NOTE_ON(p), NOTE_OFF(p), TIME_SHIFT(10 ms .. 1 s in
10 ms steps), SET_VELOCITY(32 bins). Velocity tokens are emitted only when
the bin changes.
"""
from __future__ import annotations

SHIFT_RES = 0.01
MAX_SHIFT_STEPS = 100


def midi_like_tokens(notes) -> list[str]:
    events = []
    for n in notes:
        events.append((n.onset_s, 1, n.pitch, n.velocity))
        events.append((n.onset_s + n.dur_s, 0, n.pitch, None))
    events.sort(key=lambda e: (e[0], e[1], e[2]))
    tokens = []
    clock = 0  # in 10 ms steps
    velocity_bin = None
    for t, is_on, pitch, vel in events:
        target = round(t / SHIFT_RES)
        gap = target - clock
        while gap > 0:
            step = min(gap, MAX_SHIFT_STEPS)
            tokens.append(f"TIME_SHIFT_{step}")
            gap -= step
        clock = max(clock, target)
        if is_on:
            vbin = (vel - 1) // 4
            if vbin != velocity_bin:
                tokens.append(f"SET_VELOCITY_{vbin}")
                velocity_bin = vbin
            tokens.append(f"NOTE_ON_{pitch}")
        else:
            tokens.append(f"NOTE_OFF_{pitch}")
    return tokens
