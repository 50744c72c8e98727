"""Closed-loop and open-loop episode simulation."""
from .episode import (EpisodeConfig, EpisodeError, EpisodeTrace, TickRecord, cloud_digest, run_episode,
                      run_open_loop)
from .idm import IdmParams, ReactiveActor, idm_accel, reactive_actor_step
