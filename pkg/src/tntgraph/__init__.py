"""Decision-graph learners: TnT (micro trees grown inside graph nodes), CART and naive decision graphs."""

__version__ = "0.1.0"
