import numpy as np
import pytest

from deepq.envs import (Catch, GridWorld, Preprocessor, TabularChain,
                        bilinear_resize, make_env, preprocess_frame)


class TestCatch:
    def test_reset_layout(self):
        env = Catch(rng=np.random.default_rng(0))
        frame = env.reset()
        assert frame.shape == (24, 24) and frame.dtype == np.uint8
        assert env.ball_row == 0
        # paddle centred on the bottom row
        paddle_cols = np.flatnonzero(frame[23] == Catch.PADDLE)
        assert len(paddle_cols) == env.paddle_width == 8
        assert paddle_cols[0] == (24 - 8) // 2

    def test_reset_deterministic_given_seed(self):
        env = Catch()
        a = env.reset(seed=42)
        b = env.reset(seed=42)
        np.testing.assert_array_equal(a, b)

    def test_episode_length_and_reward_support(self):
        env = Catch(rng=np.random.default_rng(1))
        for _ in range(30):
            env.reset()
            total, steps = 0.0, 0
            while True:
                res = env.step(1)
                total += res.reward
                steps += 1
                if res.terminal:
                    break
            assert steps == 23  # height - 1
            assert total in (-1.0, 1.0)

    def test_catch_and_miss(self):
        env = Catch(height=4, width=6, paddle_width=2,
                    rng=np.random.default_rng(0))
        env.reset()
        env.ball_col = env.paddle_left  # ball straight onto the paddle
        r = None
        for _ in range(3):
            r = env.step(1)
        assert r.terminal and r.reward == 1.0

        env.reset()
        env.ball_col = 0
        env.paddle_left = 4  # far away; stays put
        for _ in range(3):
            r = env.step(1)
        assert r.terminal and r.reward == -1.0

    def test_paddle_clamped_at_walls(self):
        env = Catch(rng=np.random.default_rng(2))
        env.reset()
        for _ in range(10):
            env.step(0)
            assert env.paddle_left >= 0
            if env.done:
                env.reset()

    def test_step_after_terminal_raises(self):
        env = Catch(rng=np.random.default_rng(3))
        env.reset()
        for _ in range(23):
            env.step(1)
        with pytest.raises(RuntimeError):
            env.step(1)

    def test_random_policy_value_is_minus_third(self):
        # paddle covers exactly 1/3 of the columns and the ball column is
        # independent of the paddle walk, so P(catch) = 1/3 exactly.
        env = Catch(rng=np.random.default_rng(4))
        rng = np.random.default_rng(5)
        total = 0.0
        games = 3000
        for _ in range(games):
            env.reset()
            while True:
                res = env.step(int(rng.integers(0, 3)))
                if res.terminal:
                    total += res.reward
                    break
        assert total / games == pytest.approx(-1.0 / 3.0, abs=0.035)

    def test_state_round_trip(self):
        env = Catch(rng=np.random.default_rng(6))
        env.reset()
        env.step(0)
        saved = env.get_state()
        frame_a = env.step(2).observation
        env.set_state(saved)
        frame_b = env.step(2).observation
        np.testing.assert_array_equal(frame_a, frame_b)


class TestGridWorld:
    def test_reset_at_start(self):
        env = GridWorld()
        frame = env.reset()
        assert env.pos == (0, 0)
        assert frame[0, 0] == GridWorld.AGENT
        assert frame[7, 7] == GridWorld.GOAL

    def test_wall_bump_no_move(self):
        env = GridWorld()
        env.reset()
        res = env.step(0)  # up from the top row
        assert env.pos == (0, 0)
        assert res.reward == 0.0 and not res.terminal

    def test_goal_reached_in_manhattan_steps(self):
        env = GridWorld(size=8)
        env.reset()
        steps = 0
        res = None
        for _ in range(7):
            res = env.step(1)  # down
            steps += 1
        for _ in range(7):
            res = env.step(3)  # right
            steps += 1
        assert steps == 14  # Manhattan distance from (0,0) to (7,7)
        assert res.terminal and res.reward == 1.0

    def test_episode_cap(self):
        env = GridWorld(size=8, max_steps=5)
        env.reset()
        res = None
        for _ in range(5):
            res = env.step(0)  # bump the wall forever
        assert res.terminal and res.reward == 0.0


class TestTabularChain:
    def test_start_and_frame(self):
        env = TabularChain()
        frame = env.reset()
        assert frame.shape == (1, 5)
        assert frame[0, 2] == 255

    def test_right_right_reaches_goal(self):
        env = TabularChain()
        env.reset()
        r1 = env.step(1)
        assert r1.reward == pytest.approx(-0.01) and not r1.terminal
        r2 = env.step(1)
        assert r2.reward == 1.0 and r2.terminal

    def test_left_left_hits_trap(self):
        env = TabularChain()
        env.reset()
        env.step(0)
        res = env.step(0)
        assert res.reward == -1.0 and res.terminal

    def test_tables_are_consistent(self):
        env = TabularChain()
        assert len(env.TRANSITIONS) == env.N_STATES
        for s in range(1, 4):
            assert env.TRANSITIONS[s] == (s - 1, s + 1)


class TestMakeEnv:
    def test_registry(self):
        assert make_env("catch").spec.n_actions == 3
        assert make_env("gridworld").spec.n_actions == 4
        assert make_env("tabular").spec.n_actions == 2

    def test_catch_default_board(self):
        env = make_env("catch")
        assert env.spec.frame_shape == (24, 24)

    def test_gridworld_default_board(self):
        env = make_env("gridworld")
        assert env.spec.frame_shape == (8, 8)

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown environment"):
            make_env("pong")


class TestPreprocess:
    def test_white_frame_stays_one(self):
        frame = np.full((10, 12), 255, dtype=np.uint8)
        out = preprocess_frame(frame, (24, 24))
        np.testing.assert_allclose(out, 1.0, atol=1e-6)

    def test_red_pixel_luminance(self):
        frame = np.zeros((1, 1, 3), dtype=np.uint8)
        frame[0, 0, 0] = 255
        out = preprocess_frame(frame, (1, 1))
        assert out[0, 0] == pytest.approx(76.245 / 255.0, abs=1e-5)
        assert out[0, 0] == pytest.approx(0.29900, abs=1e-5)

    def test_checkerboard_bilinear_oracle(self):
        # 4x4 checkerboard to 2x2: output pixels sample source centres
        # (0.5, 0.5), (0.5, 2.5), (2.5, 0.5), (2.5, 2.5), each averaging a
        # 2x2 cell of two ones and two zeros -> all 0.5.
        board = np.indices((4, 4)).sum(axis=0) % 2 == 0
        frame = (board * 255).astype(np.uint8)
        out = preprocess_frame(frame, (2, 2))
        np.testing.assert_allclose(out, 0.5, atol=1e-7)

    def test_row_gradient_bilinear_oracle(self):
        img = np.repeat(np.arange(4.0)[:, None], 4, axis=1)  # img[i, j] = i
        out = bilinear_resize(img, 2, 2)
        np.testing.assert_allclose(out, [[0.5, 0.5], [2.5, 2.5]])

    def test_identity_when_target_size(self):
        rng = np.random.default_rng(0)
        img = rng.random((24, 24))
        np.testing.assert_array_equal(bilinear_resize(img, 24, 24), img)

    def test_idempotent_on_target_size_grayscale(self):
        rng = np.random.default_rng(1)
        frame = (rng.random((24, 24)) * 255).astype(np.uint8)
        once = preprocess_frame(frame, (24, 24))
        twice = preprocess_frame(once, (24, 24))
        np.testing.assert_allclose(twice, once, atol=1e-6)

    def test_output_range(self):
        rng = np.random.default_rng(2)
        frame = (rng.random((30, 17, 3)) * 255).astype(np.uint8)
        out = preprocess_frame(frame, (24, 24))
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestFrameStack:
    def test_reset_fills_stack(self):
        pre = Preprocessor((4, 4), stack=4)
        f = np.full((4, 4), 255, dtype=np.uint8)
        out = pre.reset(f)
        assert out.shape == (4, 4, 4)
        for c in range(4):
            np.testing.assert_allclose(out[:, :, c], 1.0)

    def test_fifo_keeps_last_four(self):
        pre = Preprocessor((1, 1), stack=4)
        outs = [pre.push(np.array([[v]], dtype=np.uint8))
                for v in (10, 20, 30, 40, 50)]
        last = outs[-1]
        np.testing.assert_allclose(
            last[0, 0], np.array([20, 30, 40, 50]) / 255.0)

    def test_newest_at_last_slot(self):
        pre = Preprocessor((1, 1), stack=3)
        pre.reset(np.array([[0]], dtype=np.uint8))
        out = pre.push(np.array([[255]], dtype=np.uint8))
        assert out[0, 0, -1] == 1.0
        assert out[0, 0, 0] == 0.0

    def test_depth_one_is_latest_frame(self):
        pre = Preprocessor((2, 2), stack=1)
        pre.reset(np.zeros((2, 2), dtype=np.uint8))
        out = pre.push(np.full((2, 2), 255, dtype=np.uint8))
        assert out.shape == (2, 2, 1)
        np.testing.assert_allclose(out[:, :, 0], 1.0)

    def test_contents_depend_on_last_frames_only(self):
        def feed(pre, values):
            out = None
            for v in values:
                out = pre.push(np.array([[v]], dtype=np.uint8))
            return out

        a = feed(Preprocessor((1, 1), stack=3), [1, 2, 3, 4, 5])
        b = feed(Preprocessor((1, 1), stack=3), [9, 8, 3, 4, 5])
        np.testing.assert_array_equal(a, b)

    def test_state_round_trip(self):
        pre = Preprocessor((2, 2), stack=3)
        for v in (10, 20, 30):
            pre.push(np.full((2, 2), v, dtype=np.uint8))
        saved = pre.get_state()
        after = pre.push(np.full((2, 2), 40, dtype=np.uint8))
        pre.set_state(saved)
        np.testing.assert_array_equal(
            pre.push(np.full((2, 2), 40, dtype=np.uint8)), after)
