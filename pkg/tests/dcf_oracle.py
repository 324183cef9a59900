"""Event-level saturated DCF simulator used as an oracle for the analytic model.

Every node always has a packet. Backoff counters decrement once per generic
slot (empty or busy); a node whose counter reaches zero transmits. Only the
raw MAC constants are taken from the params object.
"""
import random
from dataclasses import dataclass


@dataclass
class SlotStats:
    n_slots: int
    n_empty: int
    n_success: int
    n_collision: int
    mean_slot_s: float
    tx_prob: float
    collision_prob: float
    mean_final_backoff: float


def simulate_dcf(n_nodes, params, payload_bits, n_slots, seed=0):
    rng = random.Random(seed)
    cw_min, m, r_max = params.cw_min, params.max_backoff_stage, params.r_max
    t_e = params.empty_slot_us * 1e-6
    t_data = params.phy_header_us * 1e-6 + payload_bits / params.data_rate_bps
    t_s = (params.rts_us + 3 * params.sifs_us + params.cts_us + params.ack_us) * 1e-6 + t_data
    t_c = (params.rts_us + params.difs_us) * 1e-6

    def window(stage):
        return cw_min * (2 ** min(stage, m))

    stage = [0] * n_nodes
    counter = [rng.randrange(window(0)) for _ in range(n_nodes)]
    last_draw = counter[:]

    slots = empty = success = collision = 0
    attempts = collided_attempts = 0
    final_backoff_sum = 0
    while slots < n_slots:
        skip = min(counter)
        if skip:
            skip = min(skip, n_slots - slots)
            empty += skip
            slots += skip
            for i in range(n_nodes):
                counter[i] -= skip
            if slots >= n_slots:
                break
        tx = [i for i in range(n_nodes) if counter[i] == 0]
        slots += 1
        attempts += len(tx)
        for i in range(n_nodes):
            if counter[i] > 0:
                counter[i] -= 1
        if len(tx) == 1:
            i = tx[0]
            success += 1
            final_backoff_sum += last_draw[i]
            stage[i] = 0
        else:
            collision += 1
            collided_attempts += len(tx)
            for i in tx:
                stage[i] = stage[i] + 1 if stage[i] < r_max else 0
        for i in tx:
            counter[i] = last_draw[i] = rng.randrange(window(stage[i]))

    busy_time = success * t_s + collision * t_c
    return SlotStats(
        n_slots=slots,
        n_empty=empty,
        n_success=success,
        n_collision=collision,
        mean_slot_s=(empty * t_e + busy_time) / slots,
        tx_prob=attempts / (slots * n_nodes),
        collision_prob=collided_attempts / attempts if attempts else 0.0,
        mean_final_backoff=final_backoff_sum / success if success else float("nan"),
    )
