import numpy as np
import pytest

from core.checkpoint import HEADER, TrainedModel, load_checkpoint, save_checkpoint
from core.history import EpochRecord, TrainingHistory, read_history_jsonl, write_history_jsonl
from core.numerics import xavier_init
from data.domains import TransferPath
from utils.errors import DimensionError, ParseError


def _record(epoch, reward, selection=(0, 1)):
    return EpochRecord(
        epoch=epoch, l_mi=-0.25, l_ms=0.125, l_ce=0.7 + epoch,
        mean_cumulative_reward=reward, cumulative_rewards=[reward], rewards=[[reward, 0.0]],
        selection=list(selection), path=[2] if selection[1] else [], path_meta=[60.0] if selection[1] else [],
        intermediates=[1, 2], intermediate_meta=[30.0, 60.0], source_accuracy=0.9, target_accuracy=None,
    )


@pytest.fixture
def history():
    h = TrainingHistory()
    for epoch, reward in enumerate((1.0 / 3.0, -50.0, 2.5)):
        h.append(_record(epoch, reward, selection=(0, epoch % 2)))
    return h


@pytest.fixture
def trained():
    return TrainedModel(
        feature=xavier_init([2, 5, 4], seed=0),
        invariant=xavier_init([4, 3], seed=1),
        specific=xavier_init([4, 2], seed=2),
        classifier=xavier_init([3, 2], seed=3, output_activation='softmax'),
        policy=xavier_init([6, 4, 1], seed=4, output_activation='sigmoid'),
        path=TransferPath((3, 1)),
        domain_meta={0: 0.0, 1: 1.0 / 7.0, 3: 45.0, 4: None},
    )


def test_history_round_trip(history, tmp_path):
    path = write_history_jsonl(history, str(tmp_path / 'out' / 'history.jsonl'))
    loaded = read_history_jsonl(path)
    assert loaded.records == history.records
    assert loaded.last.target_accuracy is None


def test_history_views(history):
    matrix = history.selection_matrix()
    assert matrix.shape == (2, 3)
    np.testing.assert_array_equal(matrix[1], [0, 1, 0])
    np.testing.assert_allclose(history.reward_moving_average(window=2), [1 / 3, (1 / 3 - 50) / 2, -23.75])
    frame = history.to_frame()
    assert list(frame.index) == [0, 1, 2]
    assert frame['l_ce'].tolist() == pytest.approx([0.7, 1.7, 2.7])


def test_history_rejects_nan(history, tmp_path):
    history.append(_record(3, float('nan')))
    with pytest.raises(ValueError):
        write_history_jsonl(history, str(tmp_path / 'history.jsonl'))


@pytest.mark.parametrize('bad_line', ['{not json', '{"epoch": 1}'])
def test_history_parse_errors_carry_line(history, tmp_path, bad_line):
    path = write_history_jsonl(history, str(tmp_path / 'history.jsonl'))
    with open(path, 'a') as f:
        f.write(bad_line + '\n')
    with pytest.raises(ParseError) as excinfo:
        read_history_jsonl(path)
    assert excinfo.value.line == 4


def test_checkpoint_round_trip_is_bit_exact(trained, tmp_path):
    path = save_checkpoint(trained, str(tmp_path / 'model.ckpt'))
    loaded = load_checkpoint(path)
    for name, net in trained.networks().items():
        other = loaded.networks()[name]
        assert other.output_activation == net.output_activation
        for before, after in zip(net.weights + net.biases, other.weights + other.biases):
            np.testing.assert_array_equal(before, after)
    assert loaded.path.domain_ids == (3, 1)
    assert loaded.domain_meta == trained.domain_meta

    again = save_checkpoint(loaded, str(tmp_path / 'again.ckpt'))
    with open(path) as a, open(again) as b:
        assert a.read() == b.read()


def test_checkpoint_with_empty_path(trained, tmp_path):
    trained.path = TransferPath(())
    loaded = load_checkpoint(save_checkpoint(trained, str(tmp_path / 'model.ckpt')))
    assert loaded.path.domain_ids == ()


def test_checkpoint_rejects_bad_header(tmp_path):
    path = tmp_path / 'model.ckpt'
    path.write_text('# something else\n')
    with pytest.raises(ParseError) as excinfo:
        load_checkpoint(str(path))
    assert excinfo.value.line == 1


def test_checkpoint_reports_corrupt_value_line(trained, tmp_path):
    path = save_checkpoint(trained, str(tmp_path / 'model.ckpt'))
    with open(path) as f:
        lines = f.read().splitlines()
    lines[3] = 'zz ' + lines[3].split(' ', 1)[1]
    with open(path, 'w') as f:
        f.write('\n'.join(lines) + '\n')
    with pytest.raises(ParseError) as excinfo:
        load_checkpoint(path)
    assert excinfo.value.line == 4


def test_checkpoint_missing_network(trained, tmp_path):
    path = save_checkpoint(trained, str(tmp_path / 'model.ckpt'))
    with open(path) as f:
        text = f.read()
    start = text.index('network policy')
    end = text.index('path ')
    with open(path, 'w') as f:
        f.write(text[:start] + text[end:])
    with pytest.raises(ParseError, match='policy'):
        load_checkpoint(path)


def test_trained_model_checks_shapes(trained):
    with pytest.raises(DimensionError):
        TrainedModel(trained.feature, trained.invariant, trained.specific, trained.classifier,
                     xavier_init([5, 1], seed=0, output_activation='sigmoid'))
    assert HEADER.startswith('#')
