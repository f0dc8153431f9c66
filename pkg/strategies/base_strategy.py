"""Base strategy class for intermediate-domain selection."""
import logging

logger = logging.getLogger('strategies.base')


class BaseStrategy:
    """Base class for all selection strategies.

    A strategy sees one PolicyState per visited intermediate domain and
    answers with an ActionSample (select or skip). After every epoch the
    trainer hands it the finished rollouts so it can learn from them.
    """

    name = 'base'
    learns = False

    def probability(self, state):
        """Probability of selecting the domain described by ``state``."""
        raise NotImplementedError("Subclasses must implement probability")

    def decide(self, state, rng, greedy=False):
        """Decide whether to select the current domain.

        This method should be implemented by subclasses.

        Args:
            state: PolicyState for the current step
            rng: numpy Generator used for sampling
            greedy: Use the deterministic action a = [p >= 0.5]

        Returns:
            ActionSample
        """
        raise NotImplementedError("Subclasses must implement decide")

    def policy_network(self, input_dim, hidden):
        """Policy network that reproduces this strategy's greedy choices.

        Stored in checkpoints so a saved model extracts the path the
        strategy actually took.
        """
        raise NotImplementedError("Subclasses must implement policy_network")

    def update(self, traces):
        """Learn from an epoch's finished rollouts.

        Returns:
            dict: diagnostics (empty for strategies that do not learn)
        """
        return {}
